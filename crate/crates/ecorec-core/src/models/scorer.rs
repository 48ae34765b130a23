//! Scorers: (user vector, candidate vector) → one logit.

use rand::Rng;

use crate::nn::{CrossNetwork, Linear, Mlp};
use crate::nn::{NodeId, ParamStore, Tape};

use super::spec::VariantSpec;

pub enum Scorer {
    /// Inner product. No parameters.
    Dot,
    /// Feed-forward net over the concatenated pair.
    Mlp { net: Mlp },
    /// Explicit feature crosses and a deep tower, fused by a linear head.
    CrossNetwork {
        cross: CrossNetwork,
        deep: Mlp,
        head: Linear,
    },
    /// Feed-forward net over [user, candidate, user ⊙ candidate].
    DinMlp { net: Mlp },
    /// Feed-forward net over the concatenated pair (the user vector here is
    /// already candidate-aware, produced by the transformer user module).
    BstMlp { net: Mlp },
}

impl Scorer {
    pub fn dot() -> Self {
        Scorer::Dot
    }

    pub fn mlp<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        let d = spec.embed_dim;
        Scorer::Mlp {
            net: Mlp::new(ps, &[2 * d, d, 1], rng),
        }
    }

    pub fn cross_network<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        let d = spec.embed_dim;
        Scorer::CrossNetwork {
            cross: CrossNetwork::new(ps, 2 * d, spec.cross_depth, rng),
            deep: Mlp::new(ps, &[2 * d, d, d], rng),
            head: Linear::new(ps, 3 * d, 1, rng),
        }
    }

    pub fn din_mlp<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        let d = spec.embed_dim;
        Scorer::DinMlp {
            net: Mlp::new(ps, &[3 * d, d, 1], rng),
        }
    }

    pub fn bst_mlp<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, rng: &mut R) -> Self {
        let d = spec.embed_dim;
        Scorer::BstMlp {
            net: Mlp::new(ps, &[2 * d, d, 1], rng),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Scorer::Dot => "dot",
            Scorer::Mlp { .. } => "mlp",
            Scorer::CrossNetwork { .. } => "cross_network",
            Scorer::DinMlp { .. } => "din_mlp",
            Scorer::BstMlp { .. } => "bst_mlp",
        }
    }

    /// Score one (user, candidate) pair; both inputs and the result are 1 × d
    /// and 1 × 1 row nodes on the tape.
    pub fn forward(&self, tape: &mut Tape, ps: &ParamStore, user: NodeId, cand: NodeId) -> NodeId {
        match self {
            Scorer::Dot => {
                let ct = tape.transpose(cand);
                tape.matmul(user, ct)
            }
            Scorer::Mlp { net } => {
                let x = tape.concat_cols(&[user, cand]);
                net.forward(tape, ps, x)
            }
            Scorer::CrossNetwork { cross, deep, head } => {
                let x0 = tape.concat_cols(&[user, cand]);
                let crossed = cross.forward(tape, ps, x0);
                let towered = deep.forward(tape, ps, x0);
                let fused = tape.concat_cols(&[crossed, towered]);
                head.forward(tape, ps, fused)
            }
            Scorer::DinMlp { net } => {
                let prod = tape.mul(user, cand);
                let x = tape.concat_cols(&[user, cand, prod]);
                net.forward(tape, ps, x)
            }
            Scorer::BstMlp { net } => {
                let x = tape.concat_cols(&[user, cand]);
                net.forward(tape, ps, x)
            }
        }
    }
}
