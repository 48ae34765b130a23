//! Content encoders: article id → representation node on the tape.
//!
//! Every call that actually computes a representation from content (or from
//! a trainable id embedding) increments the encode counter. Reads from a
//! frozen cached table are lookups, not encodes, and are tallied separately;
//! that distinction is the whole point of the encode-once training paradigm,
//! so the counters are load-bearing and tested, not diagnostics.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::data::{ArticleStore, NewsId};
use crate::nn::{AdditiveAttention, Linear, MultiHeadSelfAttention, TitleConv};
use crate::nn::{NodeId, ParamId, ParamStore, Tape};
use crate::train::EmbeddingTable;
use crate::{Error, Result};

use super::plm::PlmBackend;
use super::spec::VariantSpec;

/// Init scale for embedding rows.
pub const EMBED_SIGMA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Cnn,
    SelfAttention,
    Pooling,
    PlmAdapter,
    LookupRandom,
    LookupCached,
}

impl EncoderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderKind::Cnn => "cnn",
            EncoderKind::SelfAttention => "self_attention",
            EncoderKind::Pooling => "pooling",
            EncoderKind::PlmAdapter => "plm_adapter",
            EncoderKind::LookupRandom => "lookup_random",
            EncoderKind::LookupCached => "lookup_cached",
        }
    }

    /// Whether a call to this encoder counts toward the encode tally.
    pub fn counts_as_encode(&self) -> bool {
        !matches!(self, EncoderKind::LookupCached)
    }
}

enum EncoderImpl {
    /// Trainable per-article embedding matrix; no content is read.
    LookupRandom { table: ParamId, n_rows: usize },
    /// Word embeddings, windowed convolution, additive-attention pooling.
    Cnn {
        word_emb: ParamId,
        conv: TitleConv,
        pool: AdditiveAttention,
        empty_default: ParamId,
    },
    /// Word embeddings, multi-head self-attention, additive-attention pooling.
    SelfAttention {
        word_emb: ParamId,
        proj: Linear,
        attn: MultiHeadSelfAttention,
        pool: AdditiveAttention,
        empty_default: ParamId,
    },
    /// Mean of word embeddings, then a linear map.
    Pooling {
        word_emb: ParamId,
        proj: Linear,
        empty_default: ParamId,
    },
    /// External language model plus a trainable adapter.
    PlmAdapter {
        backend: Arc<dyn PlmBackend>,
        proj: Linear,
    },
    /// Frozen precomputed table plus a trainable projection.
    LookupCached {
        table: Arc<EmbeddingTable>,
        proj: Linear,
    },
}

pub struct ContentEncoder {
    inner: EncoderImpl,
    pub out_dim: usize,
    encodes: AtomicU64,
    cached_lookups: AtomicU64,
}

impl ContentEncoder {
    pub fn lookup_random<R: Rng>(
        ps: &mut ParamStore,
        n_articles: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = ps.add_normal(n_articles, dim, EMBED_SIGMA, rng);
        Self::wrap(
            EncoderImpl::LookupRandom {
                table,
                n_rows: n_articles,
            },
            dim,
        )
    }

    pub fn cnn<R: Rng>(ps: &mut ParamStore, spec: &VariantSpec, vocab_len: usize, rng: &mut R) -> Self {
        let word_emb = ps.add_normal(vocab_len, spec.word_embed_dim, EMBED_SIGMA, rng);
        let conv = TitleConv::new(ps, spec.word_embed_dim, spec.embed_dim, spec.conv_kernel, rng);
        let pool = AdditiveAttention::new(ps, spec.embed_dim, spec.attn_dim, rng);
        let empty_default = ps.add_normal(1, spec.embed_dim, EMBED_SIGMA, rng);
        Self::wrap(
            EncoderImpl::Cnn {
                word_emb,
                conv,
                pool,
                empty_default,
            },
            spec.embed_dim,
        )
    }

    pub fn self_attention<R: Rng>(
        ps: &mut ParamStore,
        spec: &VariantSpec,
        vocab_len: usize,
        rng: &mut R,
    ) -> Self {
        let word_emb = ps.add_normal(vocab_len, spec.word_embed_dim, EMBED_SIGMA, rng);
        let proj = Linear::new(ps, spec.word_embed_dim, spec.embed_dim, rng);
        let attn = MultiHeadSelfAttention::new(ps, spec.embed_dim, spec.n_heads, rng);
        let pool = AdditiveAttention::new(ps, spec.embed_dim, spec.attn_dim, rng);
        let empty_default = ps.add_normal(1, spec.embed_dim, EMBED_SIGMA, rng);
        Self::wrap(
            EncoderImpl::SelfAttention {
                word_emb,
                proj,
                attn,
                pool,
                empty_default,
            },
            spec.embed_dim,
        )
    }

    pub fn pooling<R: Rng>(
        ps: &mut ParamStore,
        spec: &VariantSpec,
        vocab_len: usize,
        rng: &mut R,
    ) -> Self {
        let word_emb = ps.add_normal(vocab_len, spec.word_embed_dim, EMBED_SIGMA, rng);
        let proj = Linear::new(ps, spec.word_embed_dim, spec.embed_dim, rng);
        let empty_default = ps.add_normal(1, spec.embed_dim, EMBED_SIGMA, rng);
        Self::wrap(
            EncoderImpl::Pooling {
                word_emb,
                proj,
                empty_default,
            },
            spec.embed_dim,
        )
    }

    pub fn plm_adapter<R: Rng>(
        ps: &mut ParamStore,
        backend: Arc<dyn PlmBackend>,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let proj = Linear::new(ps, backend.dim(), out_dim, rng);
        Self::wrap(EncoderImpl::PlmAdapter { backend, proj }, out_dim)
    }

    pub fn lookup_cached<R: Rng>(
        ps: &mut ParamStore,
        table: Arc<EmbeddingTable>,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let proj = Linear::new(ps, table.dim, out_dim, rng);
        Self::wrap(EncoderImpl::LookupCached { table, proj }, out_dim)
    }

    fn wrap(inner: EncoderImpl, out_dim: usize) -> Self {
        Self {
            inner,
            out_dim,
            encodes: AtomicU64::new(0),
            cached_lookups: AtomicU64::new(0),
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match &self.inner {
            EncoderImpl::LookupRandom { .. } => EncoderKind::LookupRandom,
            EncoderImpl::Cnn { .. } => EncoderKind::Cnn,
            EncoderImpl::SelfAttention { .. } => EncoderKind::SelfAttention,
            EncoderImpl::Pooling { .. } => EncoderKind::Pooling,
            EncoderImpl::PlmAdapter { .. } => EncoderKind::PlmAdapter,
            EncoderImpl::LookupCached { .. } => EncoderKind::LookupCached,
        }
    }

    /// Total calls that computed a representation (everything except reads
    /// from the frozen cache).
    pub fn encodes(&self) -> u64 {
        self.encodes.load(Ordering::Relaxed)
    }

    /// Reads served from the frozen cache.
    pub fn cached_lookups(&self) -> u64 {
        self.cached_lookups.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.encodes.store(0, Ordering::Relaxed);
        self.cached_lookups.store(0, Ordering::Relaxed);
    }

    /// Forward pass for the token-reading kinds; `None` for the rest.
    fn text_forward(&self, tape: &mut Tape, ps: &ParamStore, tokens: &[usize]) -> Option<NodeId> {
        match &self.inner {
            EncoderImpl::Cnn {
                word_emb,
                conv,
                pool,
                empty_default,
            } => Some(if tokens.is_empty() {
                tape.param(ps, *empty_default)
            } else {
                let words = tape.gather(ps, *word_emb, tokens);
                let feats = conv.forward(tape, ps, words);
                pool.forward(tape, ps, feats)
            }),
            EncoderImpl::SelfAttention {
                word_emb,
                proj,
                attn,
                pool,
                empty_default,
            } => Some(if tokens.is_empty() {
                tape.param(ps, *empty_default)
            } else {
                let words = tape.gather(ps, *word_emb, tokens);
                let projected = proj.forward(tape, ps, words);
                let mixed = attn.forward(tape, ps, projected);
                pool.forward(tape, ps, mixed)
            }),
            EncoderImpl::Pooling {
                word_emb,
                proj,
                empty_default,
            } => Some(if tokens.is_empty() {
                tape.param(ps, *empty_default)
            } else {
                let words = tape.gather(ps, *word_emb, tokens);
                let ones = tape.leaf_row(&vec![1.0 / tokens.len() as f64; tokens.len()]);
                let mean = tape.matmul(ones, words);
                proj.forward(tape, ps, mean)
            }),
            _ => None,
        }
    }

    /// Encode an explicit token sequence. Only the token-reading kinds
    /// support this; it exists so self-supervised pretraining can perturb
    /// the input (mask tokens) without staging a modified corpus.
    pub fn encode_tokens(
        &self,
        tape: &mut Tape,
        ps: &ParamStore,
        tokens: &[usize],
    ) -> Result<NodeId> {
        match self.text_forward(tape, ps, tokens) {
            Some(node) => {
                self.encodes.fetch_add(1, Ordering::Relaxed);
                Ok(node)
            }
            None => Err(Error::Assembly(format!(
                "{} does not encode token sequences",
                self.kind().as_str()
            ))),
        }
    }

    /// Build the representation of `id` on the tape and return its 1 × out_dim node.
    pub fn encode(
        &self,
        tape: &mut Tape,
        ps: &ParamStore,
        store: &ArticleStore,
        id: NewsId,
    ) -> Result<NodeId> {
        let node = match &self.inner {
            EncoderImpl::LookupRandom { table, n_rows } => {
                let row = id.0 as usize;
                if row >= *n_rows {
                    return Err(Error::Assembly(format!(
                        "article row {row} is outside the id embedding ({n_rows} rows)"
                    )));
                }
                tape.gather(ps, *table, &[row])
            }
            EncoderImpl::Cnn { .. } | EncoderImpl::SelfAttention { .. } | EncoderImpl::Pooling { .. } => {
                let tokens = title_rows(store, id)?;
                self.text_forward(tape, ps, &tokens).expect("text kind")
            }
            EncoderImpl::PlmAdapter { backend, proj } => {
                let title = store.raw_title(id);
                let words = crate::data::tokenize(title);
                let refs: Vec<&str> = words.iter().map(String::as_str).collect();
                let vector = backend.encode_text(&refs);
                let leaf = tape.leaf_row(&vector);
                proj.forward(tape, ps, leaf)
            }
            EncoderImpl::LookupCached { table, proj } => {
                let name = store
                    .id_name(id)
                    .ok_or_else(|| Error::Table(format!("unknown article row {}", id.0)))?;
                let row = table.get(name).ok_or_else(|| {
                    Error::Table(format!("embedding table is missing news id {name}"))
                })?;
                let row_f64: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                let leaf = tape.leaf_row(&row_f64);
                let out = proj.forward(tape, ps, leaf);
                self.cached_lookups.fetch_add(1, Ordering::Relaxed);
                return Ok(out);
            }
        };
        self.encodes.fetch_add(1, Ordering::Relaxed);
        Ok(node)
    }
}

fn title_rows(store: &ArticleStore, id: NewsId) -> Result<Vec<usize>> {
    if (id.0 as usize) >= store.n_articles() {
        return Err(Error::Data(format!(
            "article row {} is outside the store ({} articles)",
            id.0,
            store.n_articles()
        )));
    }
    Ok(store.title_prefix(id).iter().map(|&t| t as usize).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synth, prepare_dataset, PrepareCfg, SynthCfg};
    use crate::models::plm::StubPlm;
    use crate::models::spec::VariantSpec;
    use crate::train::TableProvenance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synth_store() -> crate::data::DatasetBundle {
        let corpus = generate_synth(&SynthCfg::default());
        prepare_dataset(
            vec![corpus.news_tsv.as_bytes()],
            corpus.train_tsv.as_bytes(),
            corpus.dev_tsv.as_bytes(),
            &PrepareCfg::default(),
        )
        .unwrap()
    }

    fn spec() -> VariantSpec {
        let mut s = VariantSpec::new(
            crate::models::spec::BaseModel::Nrms,
            crate::models::spec::VariantKind::Text,
        );
        s.embed_dim = 16;
        s.word_embed_dim = 12;
        s.attn_dim = 8;
        s.n_heads = 4;
        s
    }

    fn full_table(bundle: &crate::data::DatasetBundle, dim: usize) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(TableProvenance::PlmDirect, dim);
        let plm = StubPlm::new(dim, 9);
        for id in bundle.store.ids() {
            let words = crate::data::tokenize(bundle.store.raw_title(id));
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            t.insert(bundle.store.id_name(id).unwrap(), &plm.encode_text(&refs))
                .unwrap();
        }
        t
    }

    #[test]
    fn every_kind_produces_the_declared_shape() {
        let bundle = synth_store();
        let spec = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamStore::new();
        let table = Arc::new(full_table(&bundle, 24));
        let plm: Arc<dyn PlmBackend> = Arc::new(StubPlm::new(24, 3));

        let encoders = vec![
            ContentEncoder::lookup_random(&mut ps, bundle.store.n_articles(), 16, &mut rng),
            ContentEncoder::cnn(&mut ps, &spec, bundle.store.vocab.len(), &mut rng),
            ContentEncoder::self_attention(&mut ps, &spec, bundle.store.vocab.len(), &mut rng),
            ContentEncoder::pooling(&mut ps, &spec, bundle.store.vocab.len(), &mut rng),
            ContentEncoder::plm_adapter(&mut ps, plm, 16, &mut rng),
            ContentEncoder::lookup_cached(&mut ps, table, 16, &mut rng),
        ];
        let some_id = bundle.store.ids().nth(1).unwrap();
        for enc in &encoders {
            let mut tape = Tape::new();
            let node = enc.encode(&mut tape, &ps, &bundle.store, some_id).unwrap();
            assert_eq!(
                tape.value(node).dim(),
                (1, 16),
                "{} output shape",
                enc.kind().as_str()
            );
        }
    }

    #[test]
    fn encode_counter_matches_calls_except_for_cache_reads() {
        let bundle = synth_store();
        let spec = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ps = ParamStore::new();
        let cnn = ContentEncoder::cnn(&mut ps, &spec, bundle.store.vocab.len(), &mut rng);
        let cached = ContentEncoder::lookup_cached(
            &mut ps,
            Arc::new(full_table(&bundle, 24)),
            16,
            &mut rng,
        );

        let ids: Vec<NewsId> = bundle.store.ids().take(7).collect();
        let mut tape = Tape::new();
        for &id in &ids {
            cnn.encode(&mut tape, &ps, &bundle.store, id).unwrap();
            cached.encode(&mut tape, &ps, &bundle.store, id).unwrap();
        }
        assert_eq!(cnn.encodes(), 7);
        assert_eq!(cnn.cached_lookups(), 0);
        assert_eq!(cached.encodes(), 0, "cache reads are not encodes");
        assert_eq!(cached.cached_lookups(), 7);

        cnn.reset_counters();
        assert_eq!(cnn.encodes(), 0);
    }

    #[test]
    fn counts_as_encode_flags() {
        assert!(EncoderKind::Cnn.counts_as_encode());
        assert!(EncoderKind::LookupRandom.counts_as_encode());
        assert!(EncoderKind::PlmAdapter.counts_as_encode());
        assert!(!EncoderKind::LookupCached.counts_as_encode());
    }

    #[test]
    fn cached_encoder_errors_name_the_missing_id() {
        let bundle = synth_store();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut ps = ParamStore::new();
        // Table that only covers one article.
        let mut t = EmbeddingTable::new(TableProvenance::PretrainedEncoder, 8);
        let first = bundle.store.ids().next().unwrap();
        t.insert(bundle.store.id_name(first).unwrap(), &vec![0.5; 8])
            .unwrap();
        let enc = ContentEncoder::lookup_cached(&mut ps, Arc::new(t), 16, &mut rng);

        let missing = bundle.store.ids().nth(3).unwrap();
        let mut tape = Tape::new();
        let err = enc
            .encode(&mut tape, &ps, &bundle.store, missing)
            .unwrap_err();
        let name = bundle.store.id_name(missing).unwrap();
        assert!(err.to_string().contains(name), "error: {err}");
    }

    #[test]
    fn empty_title_falls_back_to_a_learned_row() {
        let bundle = synth_store();
        let spec = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ps = ParamStore::new();
        let enc = ContentEncoder::cnn(&mut ps, &spec, bundle.store.vocab.len(), &mut rng);
        // Row 0 is the unknown-article placeholder and has no title tokens.
        let unk = NewsId(0);
        assert_eq!(bundle.store.title_len(unk), 0);
        let mut tape = Tape::new();
        let node = enc.encode(&mut tape, &ps, &bundle.store, unk).unwrap();
        assert_eq!(tape.value(node).dim(), (1, 16));
        assert!(tape.value(node).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradients_flow_through_the_cached_projection_but_not_the_table() {
        let bundle = synth_store();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ps = ParamStore::new();
        let table = Arc::new(full_table(&bundle, 24));
        let before = table.to_bytes();
        let enc = ContentEncoder::lookup_cached(&mut ps, table.clone(), 16, &mut rng);

        let id = bundle.store.ids().nth(2).unwrap();
        let mut tape = Tape::new();
        let node = enc.encode(&mut tape, &ps, &bundle.store, id).unwrap();
        let loss = tape.sum_all(node);
        tape.backward(loss, 1.0, &mut ps);

        let total_grad: f64 = (0..ps.len())
            .map(|i| ps.grad(crate::nn::ParamId(i)).iter().map(|g| g.abs()).sum::<f64>())
            .sum();
        assert!(total_grad > 0.0, "projection received gradient");
        assert_eq!(table.to_bytes(), before, "table bytes are untouched");
    }
}
