//! User modules: clicked-history representations → one user vector.
//!
//! All variants share one signature. The candidate node is part of it
//! because target-attention weighs history by the candidate and the
//! transformer variant appends the candidate to the sequence; modules that
//! ignore the candidate simply take the history. Empty histories fall back
//! to a learned default row (or the user's own embedding where one exists),
//! never to zeros, so cold users still produce trainable scores.

use rand::Rng;

use crate::data::UserId;
use crate::nn::{
    AdditiveAttention, GruCell, LayerNorm, Linear, Mlp, MultiHeadSelfAttention,
};
use crate::nn::{NodeId, ParamId, ParamStore, Tape};

use super::encoder::EMBED_SIGMA;
use super::spec::VariantSpec;

pub enum UserModule {
    /// Additive attention pooling over history.
    AdditiveAttn {
        pool: AdditiveAttention,
        empty_default: ParamId,
    },
    /// GRU over history, initialized from a per-user long-term embedding.
    GruLongShort {
        user_emb: ParamId,
        // Known users get their own row; everything else shares the last row.
        n_users: usize,
        gru: GruCell,
    },
    /// Multi-head self-attention over history, then additive pooling.
    MultiheadSelfAttn {
        attn: MultiHeadSelfAttention,
        pool: AdditiveAttention,
        empty_default: ParamId,
    },
    /// History plus candidate as a position-embedded sequence through one
    /// transformer block; the candidate row is the output.
    TransformerSeq {
        pos_emb: ParamId,
        max_positions: usize,
        attn: MultiHeadSelfAttention,
        norm1: LayerNorm,
        ffn: Mlp,
        norm2: LayerNorm,
    },
    /// Mean-pooled history through a linear map.
    PooledContext {
        proj: Linear,
        empty_default: ParamId,
    },
    /// Attention over history scored against the candidate.
    TargetAttention {
        scorer: Mlp,
        empty_default: ParamId,
    },
}

impl UserModule {
    pub fn additive_attention<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        UserModule::AdditiveAttn {
            pool: AdditiveAttention::new(ps, spec.embed_dim, spec.attn_dim, rng),
            empty_default: ps.add_normal(1, spec.embed_dim, EMBED_SIGMA, rng),
        }
    }

    pub fn gru_long_short<R: Rng>(
        ps: &mut ParamStore,
        spec: &VariantSpec,
        n_users: usize,
        rng: &mut R,
    ) -> Self {
        UserModule::GruLongShort {
            user_emb: ps.add_normal(n_users + 1, spec.embed_dim, EMBED_SIGMA, rng),
            n_users,
            gru: GruCell::new(ps, spec.embed_dim, spec.embed_dim, rng),
        }
    }

    pub fn multihead_self_attention<R: Rng>(
        ps: &mut ParamStore,
        spec: &VariantSpec,
        rng: &mut R,
    ) -> Self {
        UserModule::MultiheadSelfAttn {
            attn: MultiHeadSelfAttention::new(ps, spec.embed_dim, spec.n_heads, rng),
            pool: AdditiveAttention::new(ps, spec.embed_dim, spec.attn_dim, rng),
            empty_default: ps.add_normal(1, spec.embed_dim, EMBED_SIGMA, rng),
        }
    }

    pub fn transformer_seq<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        let d = spec.embed_dim;
        UserModule::TransformerSeq {
            pos_emb: ps.add_normal(spec.max_positions + 1, d, EMBED_SIGMA, rng),
            max_positions: spec.max_positions,
            attn: MultiHeadSelfAttention::new(ps, d, spec.n_heads, rng),
            norm1: LayerNorm::new(ps, d),
            ffn: Mlp::new(ps, &[d, 2 * d, d], rng),
            norm2: LayerNorm::new(ps, d),
        }
    }

    pub fn pooled_context<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        UserModule::PooledContext {
            proj: Linear::new(ps, spec.embed_dim, spec.embed_dim, rng),
            empty_default: ps.add_normal(1, spec.embed_dim, EMBED_SIGMA, rng),
        }
    }

    pub fn target_attention<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        UserModule::TargetAttention {
            scorer: Mlp::new(ps, &[4 * spec.embed_dim, spec.attn_dim, 1], rng),
            empty_default: ps.add_normal(1, spec.embed_dim, EMBED_SIGMA, rng),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            UserModule::AdditiveAttn { .. } => "additive_attention",
            UserModule::GruLongShort { .. } => "gru_long_short",
            UserModule::MultiheadSelfAttn { .. } => "multihead_self_attention",
            UserModule::TransformerSeq { .. } => "transformer_seq",
            UserModule::PooledContext { .. } => "pooled_context",
            UserModule::TargetAttention { .. } => "target_attention",
        }
    }

    /// Combine `history` (oldest first, each 1 × d) into one 1 × d user node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ps: &ParamStore,
        user: UserId,
        history: &[NodeId],
        candidate: NodeId,
    ) -> NodeId {
        match self {
            UserModule::AdditiveAttn {
                pool,
                empty_default,
            } => {
                if history.is_empty() {
                    return tape.param(ps, *empty_default);
                }
                let seq = tape.concat_rows(history);
                pool.forward(tape, ps, seq)
            }
            UserModule::GruLongShort {
                user_emb,
                n_users,
                gru,
            } => {
                let row = (user.0 as usize).min(*n_users);
                let h0 = tape.gather(ps, *user_emb, &[row]);
                if history.is_empty() {
                    return h0;
                }
                let seq = tape.concat_rows(history);
                gru.forward_seq(tape, ps, seq, h0)
            }
            UserModule::MultiheadSelfAttn {
                attn,
                pool,
                empty_default,
            } => {
                if history.is_empty() {
                    return tape.param(ps, *empty_default);
                }
                let seq = tape.concat_rows(history);
                let mixed = attn.forward(tape, ps, seq);
                pool.forward(tape, ps, mixed)
            }
            UserModule::TransformerSeq {
                pos_emb,
                max_positions,
                attn,
                norm1,
                ffn,
                norm2,
            } => {
                // Sequence = history then candidate; the candidate always
                // takes position 0, history counts backwards from the
                // newest click so truncation never shifts learned slots.
                let n = history.len();
                let mut rows: Vec<NodeId> = history.to_vec();
                rows.push(candidate);
                let mut positions: Vec<usize> = (0..n).map(|i| (n - i).min(*max_positions)).collect();
                positions.push(0);
                let seq = tape.concat_rows(&rows);
                let pos = tape.gather(ps, *pos_emb, &positions);
                let seq = tape.add(seq, pos);

                let mixed = attn.forward(tape, ps, seq);
                let seq = tape.add(seq, mixed);
                let seq = norm1.forward(tape, ps, seq);
                let ff = ffn.forward(tape, ps, seq);
                let seq = tape.add(seq, ff);
                let seq = norm2.forward(tape, ps, seq);
                tape.slice_rows(seq, n, 1)
            }
            UserModule::PooledContext {
                proj,
                empty_default,
            } => {
                if history.is_empty() {
                    return tape.param(ps, *empty_default);
                }
                let seq = tape.concat_rows(history);
                let weights = tape.leaf_row(&vec![1.0 / history.len() as f64; history.len()]);
                let mean = tape.matmul(weights, seq);
                proj.forward(tape, ps, mean)
            }
            UserModule::TargetAttention {
                scorer,
                empty_default,
            } => {
                if history.is_empty() {
                    return tape.param(ps, *empty_default);
                }
                let n = history.len();
                let h = tape.concat_rows(history);
                let c_rep = tape.concat_rows(&vec![candidate; n]);
                let prod = tape.mul(h, c_rep);
                let diff = tape.sub(h, c_rep);
                let feats = tape.concat_cols(&[h, c_rep, prod, diff]);
                let scores = scorer.forward(tape, ps, feats);
                let scores_t = tape.transpose(scores);
                let weights = tape.softmax_rows(scores_t);
                tape.matmul(weights, h)
            }
        }
    }
}
