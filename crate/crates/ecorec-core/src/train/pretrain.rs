//! Self-supervised content-encoder pretraining and one-shot table
//! extraction, the fixed-cost half of the encode-once pipeline.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ArticleStore, NewsId, UNK};
use crate::green::{track_phase, CarbonIntensity, EmissionLedger, HardwareProfile, Phase};
use crate::models::spec::{BaseModel, VariantKind, VariantSpec};
use crate::models::{ContentEncoder, PlmBackend};
use crate::nn::{Adam, Linear, NodeId, ParamStore, Tape};
use crate::{Error, Result};

use super::table::{EmbeddingTable, TableProvenance};

/// Which text architecture the pretrained encoder uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainArch {
    Cnn,
    SelfAttention,
    Pooling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainCfg {
    pub arch: PretrainArch,
    pub embed_dim: usize,
    pub word_embed_dim: usize,
    pub attn_dim: usize,
    pub n_heads: usize,
    pub conv_kernel: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight of the category-agreement term next to token reconstruction.
    pub category_weight: f64,
}

impl Default for PretrainCfg {
    fn default() -> Self {
        Self {
            arch: PretrainArch::SelfAttention,
            embed_dim: 64,
            word_embed_dim: 64,
            attn_dim: 64,
            n_heads: 4,
            conv_kernel: 3,
            epochs: 2,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 1,
            category_weight: 0.5,
        }
    }
}

impl PretrainCfg {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("pretrain epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("pretrain batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "pretrain learning_rate must be positive and finite".into(),
            ));
        }
        if !(self.category_weight >= 0.0 && self.category_weight.is_finite()) {
            return Err(Error::Config(
                "category_weight must be non-negative and finite".into(),
            ));
        }
        self.as_variant_dims().validate()
    }

    fn as_variant_dims(&self) -> VariantSpec {
        // Encoder constructors read only the dimension fields.
        let mut s = VariantSpec::new(BaseModel::Nrms, VariantKind::Text);
        s.embed_dim = self.embed_dim;
        s.word_embed_dim = self.word_embed_dim;
        s.attn_dim = self.attn_dim;
        s.n_heads = self.n_heads;
        s.conv_kernel = self.conv_kernel;
        s
    }
}

/// A self-supervised objective over single articles. Implementations own
/// their heads (registered in the shared store) so alternatives drop in.
pub trait PretrainObjective {
    fn name(&self) -> &'static str;

    /// Loss node for one article, or `None` when it carries no signal
    /// (empty title).
    fn sample_loss(
        &self,
        tape: &mut Tape,
        ps: &ParamStore,
        encoder: &ContentEncoder,
        store: &ArticleStore,
        id: NewsId,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<NodeId>>;
}

/// Default objective: reconstruct one masked title token, plus a weighted
/// category-agreement term over the same encoded vector.
pub struct MaskedReconstruction {
    vocab_head: Linear,
    category_head: Linear,
    category_weight: f64,
}

impl MaskedReconstruction {
    pub fn new<R: Rng>(
        ps: &mut ParamStore,
        encoder_dim: usize,
        vocab_len: usize,
        n_categories: usize,
        category_weight: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            vocab_head: Linear::new(ps, encoder_dim, vocab_len, rng),
            category_head: Linear::new(ps, encoder_dim, n_categories.max(1), rng),
            category_weight,
        }
    }
}

impl PretrainObjective for MaskedReconstruction {
    fn name(&self) -> &'static str {
        "masked_token_reconstruction+category"
    }

    fn sample_loss(
        &self,
        tape: &mut Tape,
        ps: &ParamStore,
        encoder: &ContentEncoder,
        store: &ArticleStore,
        id: NewsId,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<NodeId>> {
        let tokens: Vec<usize> = store.title_prefix(id).iter().map(|&t| t as usize).collect();
        if tokens.is_empty() {
            return Ok(None);
        }
        let masked_at = rng.gen_range(0..tokens.len());
        let target = tokens[masked_at];
        let mut masked = tokens;
        masked[masked_at] = UNK as usize;

        let vec = encoder.encode_tokens(tape, ps, &masked)?;
        let recon_logits = self.vocab_head.forward(tape, ps, vec);
        let recon = tape.softmax_cross_entropy(recon_logits, target);

        let cat_logits = self.category_head.forward(tape, ps, vec);
        let cat = tape.softmax_cross_entropy(cat_logits, store.category(id) as usize);
        let cat_scaled = tape.scale(cat, self.category_weight);
        Ok(Some(tape.add(recon, cat_scaled)))
    }
}

/// A finalized content encoder: parameters frozen, vectors deterministic.
pub struct PretrainedEncoder {
    params: ParamStore,
    encoder: ContentEncoder,
    pub dim: usize,
    pub per_epoch_loss: Vec<f64>,
    pub objective: &'static str,
}

impl std::fmt::Debug for PretrainedEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PretrainedEncoder")
            .field("dim", &self.dim)
            .field("objective", &self.objective)
            .field("epochs", &self.per_epoch_loss.len())
            .finish()
    }
}

impl PretrainedEncoder {
    pub fn article_vector(&self, store: &ArticleStore, id: NewsId) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let node = self.encoder.encode(&mut tape, &self.params, store, id)?;
        Ok(tape.value(node).iter().copied().collect())
    }
}

/// Anything that can turn articles into fixed-width vectors for caching.
pub trait VectorSource {
    fn dim(&self) -> usize;
    fn provenance(&self) -> TableProvenance;
    fn article_vector(&self, store: &ArticleStore, id: NewsId) -> Result<Vec<f64>>;
    /// Encodes performed so far, for invocation accounting.
    fn encode_count(&self) -> u64;
}

impl VectorSource for PretrainedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provenance(&self) -> TableProvenance {
        TableProvenance::PretrainedEncoder
    }

    fn article_vector(&self, store: &ArticleStore, id: NewsId) -> Result<Vec<f64>> {
        PretrainedEncoder::article_vector(self, store, id)
    }

    fn encode_count(&self) -> u64 {
        self.encoder.encodes()
    }
}

/// Direct extraction from an external language model, no training at all.
pub struct PlmVectorSource {
    backend: Arc<dyn PlmBackend>,
    calls: AtomicU64,
}

impl PlmVectorSource {
    pub fn new(backend: Arc<dyn PlmBackend>) -> Self {
        Self {
            backend,
            calls: AtomicU64::new(0),
        }
    }
}

impl VectorSource for PlmVectorSource {
    fn dim(&self) -> usize {
        self.backend.dim()
    }

    fn provenance(&self) -> TableProvenance {
        TableProvenance::PlmDirect
    }

    fn article_vector(&self, store: &ArticleStore, id: NewsId) -> Result<Vec<f64>> {
        let words = crate::data::tokenize(store.raw_title(id));
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.backend.encode_text(&refs))
    }

    fn encode_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

/// Pretrain a text encoder on the corpus with the default objective,
/// recording the cost as its own emission phase.
pub fn pretrain_content_encoder(
    store: &ArticleStore,
    cfg: &PretrainCfg,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
    ledger: &mut EmissionLedger,
) -> Result<PretrainedEncoder> {
    pretrain_with(store, cfg, profile, intensity, ledger, |ps, dim, st, rng| {
        Box::new(MaskedReconstruction::new(
            ps,
            dim,
            st.vocab.len(),
            st.n_categories(),
            cfg.category_weight,
            rng,
        ))
    })
}

/// Pretrain with a caller-supplied objective builder. The builder registers
/// the objective's heads in the same parameter store as the encoder so the
/// whole pipeline trains jointly.
pub fn pretrain_with<F>(
    store: &ArticleStore,
    cfg: &PretrainCfg,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
    ledger: &mut EmissionLedger,
    build_objective: F,
) -> Result<PretrainedEncoder>
where
    F: FnOnce(&mut ParamStore, usize, &ArticleStore, &mut ChaCha8Rng) -> Box<dyn PretrainObjective>,
{
    let usable: Vec<NewsId> = store.ids().filter(|&id| store.title_len(id) > 0).collect();
    if usable.is_empty() {
        return Err(Error::Training("pretraining corpus is empty".into()));
    }
    if usable.len() < cfg.batch_size {
        return Err(Error::Training(format!(
            "pretraining corpus has {} usable articles, smaller than one batch of {}",
            usable.len(),
            cfg.batch_size
        )));
    }
    if cfg.epochs == 0 {
        return Err(Error::Training("pretraining needs at least one epoch".into()));
    }

    track_phase(ledger, Phase::Pretrain, profile, intensity, || {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut ps = ParamStore::new();
        let dims = cfg.as_variant_dims();
        let encoder = match cfg.arch {
            PretrainArch::Cnn => ContentEncoder::cnn(&mut ps, &dims, store.vocab.len(), &mut rng),
            PretrainArch::SelfAttention => {
                ContentEncoder::self_attention(&mut ps, &dims, store.vocab.len(), &mut rng)
            }
            PretrainArch::Pooling => {
                ContentEncoder::pooling(&mut ps, &dims, store.vocab.len(), &mut rng)
            }
        };
        let objective = build_objective(&mut ps, cfg.embed_dim, store, &mut rng);
        let mut adam = Adam::new(cfg.learning_rate);

        let mut order = usable.clone();
        let mut per_epoch_loss = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut n = 0usize;
            for chunk in order.chunks(cfg.batch_size) {
                let mut contributed = 0usize;
                let mut tape = Tape::new();
                for &id in chunk {
                    tape.clear();
                    if let Some(loss) =
                        objective.sample_loss(&mut tape, &ps, &encoder, store, id, &mut rng)?
                    {
                        loss_sum += tape.scalar(loss);
                        n += 1;
                        contributed += 1;
                        tape.backward(loss, 1.0 / chunk.len() as f64, &mut ps);
                    }
                }
                if contributed > 0 {
                    adam.step(&mut ps);
                }
            }
            per_epoch_loss.push(loss_sum / n.max(1) as f64);
        }

        Ok(PretrainedEncoder {
            params: ps,
            encoder,
            dim: cfg.embed_dim,
            per_epoch_loss,
            objective: objective.name(),
        })
    })
}

/// Encode every article exactly once into a frozen table, in store row
/// order. Downstream training never encodes again.
pub fn encode_once(src: &dyn VectorSource, store: &ArticleStore) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(src.provenance(), src.dim());
    for id in store.ids() {
        let name = store
            .id_name(id)
            .ok_or_else(|| Error::Table(format!("unknown article row {}", id.0)))?;
        let vec = src.article_vector(store, id)?;
        table.insert(name, &vec)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synth, prepare_dataset, DatasetBundle, PrepareCfg, SynthCfg};
    use crate::green::preset;
    use crate::models::StubPlm;

    fn bundle() -> DatasetBundle {
        let corpus = generate_synth(&SynthCfg::default());
        prepare_dataset(
            vec![corpus.news_tsv.as_bytes()],
            corpus.train_tsv.as_bytes(),
            corpus.dev_tsv.as_bytes(),
            &PrepareCfg::default(),
        )
        .unwrap()
    }

    fn small_cfg() -> PretrainCfg {
        PretrainCfg {
            embed_dim: 12,
            word_embed_dim: 12,
            attn_dim: 8,
            n_heads: 2,
            epochs: 2,
            batch_size: 8,
            ..PretrainCfg::default()
        }
    }

    #[test]
    fn vectors_are_deterministic_after_training() {
        let b = bundle();
        let (hw, ci) = preset(crate::green::PRESET_PAPER_RTX3090).unwrap();
        let mut ledger = EmissionLedger::new();
        let enc = pretrain_content_encoder(&b.store, &small_cfg(), &hw, &ci, &mut ledger).unwrap();
        let id = b.store.ids().nth(3).unwrap();
        assert_eq!(
            enc.article_vector(&b.store, id).unwrap(),
            enc.article_vector(&b.store, id).unwrap()
        );
    }

    #[test]
    fn rerunning_pretraining_reproduces_the_encoder() {
        let b = bundle();
        let (hw, ci) = preset(crate::green::PRESET_PAPER_RTX3090).unwrap();
        let mut l1 = EmissionLedger::new();
        let mut l2 = EmissionLedger::new();
        let e1 = pretrain_content_encoder(&b.store, &small_cfg(), &hw, &ci, &mut l1).unwrap();
        let e2 = pretrain_content_encoder(&b.store, &small_cfg(), &hw, &ci, &mut l2).unwrap();
        assert_eq!(e1.per_epoch_loss, e2.per_epoch_loss);
        let id = b.store.ids().nth(5).unwrap();
        assert_eq!(
            e1.article_vector(&b.store, id).unwrap(),
            e2.article_vector(&b.store, id).unwrap()
        );
    }

    #[test]
    fn loss_does_not_increase_much_by_the_second_epoch() {
        let b = bundle();
        let (hw, ci) = preset(crate::green::PRESET_PAPER_RTX3090).unwrap();
        let mut ledger = EmissionLedger::new();
        let enc = pretrain_content_encoder(&b.store, &small_cfg(), &hw, &ci, &mut ledger).unwrap();
        assert_eq!(enc.per_epoch_loss.len(), 2);
        // Allow slight noise; the trend must not be a blow-up.
        assert!(
            enc.per_epoch_loss[1] <= enc.per_epoch_loss[0] * 1.05,
            "epoch losses {:?}",
            enc.per_epoch_loss
        );
    }

    #[test]
    fn pretraining_records_its_emission_phase() {
        let b = bundle();
        let (hw, ci) = preset(crate::green::PRESET_PAPER_RTX3090).unwrap();
        let mut ledger = EmissionLedger::new();
        pretrain_content_encoder(&b.store, &small_cfg(), &hw, &ci, &mut ledger).unwrap();
        let recs: Vec<_> = ledger
            .records
            .iter()
            .filter(|r| r.phase == Phase::Pretrain)
            .collect();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].duration_hours > 0.0);
    }

    #[test]
    fn corpus_smaller_than_one_batch_is_an_error() {
        let b = bundle();
        let (hw, ci) = preset(crate::green::PRESET_PAPER_RTX3090).unwrap();
        let mut ledger = EmissionLedger::new();
        let cfg = PretrainCfg {
            batch_size: 100_000,
            ..small_cfg()
        };
        let err = pretrain_content_encoder(&b.store, &cfg, &hw, &ci, &mut ledger).unwrap_err();
        assert!(err.to_string().contains("smaller than one batch"), "{err}");
    }

    #[test]
    fn encode_once_hits_every_article_exactly_once() {
        let b = bundle();
        let src = PlmVectorSource::new(Arc::new(StubPlm::new(24, 2)));
        assert_eq!(src.encode_count(), 0);
        let table = encode_once(&src, &b.store).unwrap();
        let n = b.store.n_articles();
        assert_eq!(table.len(), n);
        assert_eq!(src.encode_count(), n as u64, "one encode per article");
        table
            .check_covers(b.store.ids().map(|id| b.store.id_name(id).unwrap()))
            .unwrap();
    }

    #[test]
    fn encode_once_lookups_match_direct_encoding() {
        let b = bundle();
        let src = PlmVectorSource::new(Arc::new(StubPlm::new(24, 2)));
        let table = encode_once(&src, &b.store).unwrap();
        for id in b.store.ids().take(5) {
            let direct = src.article_vector(&b.store, id).unwrap();
            let cached: Vec<f64> = table
                .get(b.store.id_name(id).unwrap())
                .unwrap()
                .iter()
                .map(|&v| v as f64)
                .collect();
            for (a, c) in direct.iter().zip(cached.iter()) {
                assert!((*a as f32 as f64 - c).abs() < 1e-12, "f32 cast is the only loss");
            }
        }
    }

    #[test]
    fn encode_once_is_byte_deterministic() {
        let b = bundle();
        let s1 = PlmVectorSource::new(Arc::new(StubPlm::new(24, 2)));
        let s2 = PlmVectorSource::new(Arc::new(StubPlm::new(24, 2)));
        let t1 = encode_once(&s1, &b.store).unwrap();
        let t2 = encode_once(&s2, &b.store).unwrap();
        assert_eq!(t1.to_bytes(), t2.to_bytes());
    }

    #[test]
    fn pretrained_encoder_feeds_encode_once() {
        let b = bundle();
        let (hw, ci) = preset(crate::green::PRESET_PAPER_RTX3090).unwrap();
        let mut ledger = EmissionLedger::new();
        let enc = pretrain_content_encoder(&b.store, &small_cfg(), &hw, &ci, &mut ledger).unwrap();
        let before = enc.encode_count();
        let table = encode_once(&enc, &b.store).unwrap();
        assert_eq!(enc.encode_count() - before, b.store.n_articles() as u64);
        assert_eq!(table.provenance, TableProvenance::PretrainedEncoder);
        assert_eq!(table.dim, 12);
    }
}
