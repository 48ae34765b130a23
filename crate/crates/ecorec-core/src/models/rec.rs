//! Variant assembly and the assembled recommender.
//!
//! `assemble_variant` is the single place where (base model, variant kind)
//! turns into concrete modules. Encode-once variants require the frozen
//! table up front; everything else must not receive one, so wiring mistakes
//! surface as errors instead of silently training the wrong paradigm.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ArticleStore, CtrSample, Impression, MatchingSample, NewsId, UserId};
use crate::metrics::RankedImpression;
use crate::nn::{NodeId, ParamStore, Tape};
use crate::train::{EmbeddingTable, TableProvenance};
use crate::{Error, Result};

use super::encoder::ContentEncoder;
use super::plm::StubPlm;
use super::scorer::Scorer;
use super::spec::{BaseModel, Task, VariantKind, VariantSpec};
use super::user::UserModule;

pub struct RecModel {
    pub spec: VariantSpec,
    pub params: ParamStore,
    pub encoder: ContentEncoder,
    pub user_module: UserModule,
    pub scorer: Scorer,
    user_module_call_count: AtomicU64,
    scorer_call_count: AtomicU64,
}

impl std::fmt::Debug for RecModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecModel")
            .field("spec", &self.spec.label())
            .field("encoder", &self.encoder.kind().as_str())
            .field("user_module", &self.user_module.kind())
            .field("scorer", &self.scorer.kind())
            .field("n_scalars", &self.params.n_scalars())
            .finish()
    }
}

/// Build the modules a (base model, variant kind) pair calls for.
///
/// `cached_table` is mandatory for encode-once kinds and forbidden
/// otherwise. `n_users` sizes the per-user embedding where the base model
/// keeps one.
pub fn assemble_variant(
    spec: &VariantSpec,
    store: &ArticleStore,
    n_users: usize,
    cached_table: Option<Arc<EmbeddingTable>>,
    seed: u64,
) -> Result<RecModel> {
    spec.validate()?;
    if spec.variant_kind.is_oleo() && cached_table.is_none() {
        return Err(Error::Assembly(format!(
            "{} needs a cached embedding table; run the encode step first",
            spec.label()
        )));
    }
    if !spec.variant_kind.is_oleo() && cached_table.is_some() {
        return Err(Error::Assembly(format!(
            "{} trains end to end; a cached table would be ignored",
            spec.label()
        )));
    }
    if let Some(table) = &cached_table {
        let expected = match spec.variant_kind {
            VariantKind::Prec => TableProvenance::PretrainedEncoder,
            VariantKind::BertOleo => TableProvenance::PlmDirect,
            _ => unreachable!("non-oleo kinds rejected above"),
        };
        if table.provenance != expected {
            return Err(Error::Assembly(format!(
                "{} expects a {} table but the cache was built by {}",
                spec.label(),
                expected.describe(),
                table.provenance.describe()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamStore::new();

    let encoder = match spec.variant_kind {
        VariantKind::Id => {
            ContentEncoder::lookup_random(&mut ps, store.n_articles(), spec.embed_dim, &mut rng)
        }
        VariantKind::Text => match spec.base_model {
            BaseModel::Naml | BaseModel::Lstur => {
                ContentEncoder::cnn(&mut ps, spec, store.vocab.len(), &mut rng)
            }
            BaseModel::Nrms => {
                ContentEncoder::self_attention(&mut ps, spec, store.vocab.len(), &mut rng)
            }
            BaseModel::Bst | BaseModel::Dcn | BaseModel::Din => {
                ContentEncoder::pooling(&mut ps, spec, store.vocab.len(), &mut rng)
            }
        },
        VariantKind::PlmNr => {
            let backend = StubPlm::new(spec.plm_dim, spec.plm_seed)
                .with_sleep(Duration::from_micros(spec.plm_sleep_micros));
            ContentEncoder::plm_adapter(&mut ps, Arc::new(backend), spec.embed_dim, &mut rng)
        }
        VariantKind::BertOleo | VariantKind::Prec => ContentEncoder::lookup_cached(
            &mut ps,
            cached_table.expect("checked above"),
            spec.embed_dim,
            &mut rng,
        ),
    };

    let user_module = match spec.base_model {
        BaseModel::Naml => UserModule::additive_attention(&mut ps, spec, &mut rng),
        BaseModel::Lstur => UserModule::gru_long_short(&mut ps, spec, n_users, &mut rng),
        BaseModel::Nrms => UserModule::multihead_self_attention(&mut ps, spec, &mut rng),
        BaseModel::Bst => UserModule::transformer_seq(&mut ps, spec, &mut rng),
        BaseModel::Dcn => UserModule::pooled_context(&mut ps, spec, &mut rng),
        BaseModel::Din => UserModule::target_attention(&mut ps, spec, &mut rng),
    };

    let scorer = match spec.base_model {
        BaseModel::Naml | BaseModel::Lstur | BaseModel::Nrms => Scorer::dot(),
        BaseModel::Bst => Scorer::bst_mlp(&mut ps, spec, &mut rng),
        BaseModel::Dcn => Scorer::cross_network(&mut ps, spec, &mut rng),
        BaseModel::Din => Scorer::din_mlp(&mut ps, spec, &mut rng),
    };

    Ok(RecModel {
        spec: spec.clone(),
        params: ps,
        encoder,
        user_module,
        scorer,
        user_module_call_count: AtomicU64::new(0),
        scorer_call_count: AtomicU64::new(0),
    })
}

impl RecModel {
    pub fn user_module_calls(&self) -> u64 {
        self.user_module_call_count.load(Ordering::Relaxed)
    }

    pub fn scorer_calls(&self) -> u64 {
        self.scorer_call_count.load(Ordering::Relaxed)
    }

    /// Zero every invocation counter (encoder's included).
    pub fn reset_counters(&self) {
        self.encoder.reset_counters();
        self.user_module_call_count.store(0, Ordering::Relaxed);
        self.scorer_call_count.store(0, Ordering::Relaxed);
    }

    /// Read all counters as one epoch snapshot.
    pub fn epoch_counts(&self) -> crate::train::EpochCounts {
        crate::train::EpochCounts {
            content_encodes: self.encoder.encodes(),
            cached_lookups: self.encoder.cached_lookups(),
            user_module_calls: self.user_module_calls(),
            scorer_calls: self.scorer_calls(),
        }
    }

    fn encode_history(
        &self,
        tape: &mut Tape,
        store: &ArticleStore,
        history: &[NewsId],
    ) -> Result<Vec<NodeId>> {
        history
            .iter()
            .map(|&id| self.encoder.encode(tape, &self.params, store, id))
            .collect()
    }

    /// Logits for one candidate set: history is encoded once, each candidate
    /// once, and the user module runs per candidate (only candidate-aware
    /// modules read the extra argument).
    fn score_group(
        &self,
        tape: &mut Tape,
        store: &ArticleStore,
        user: UserId,
        history: &[NewsId],
        candidates: &[NewsId],
    ) -> Result<Vec<NodeId>> {
        let history_nodes = self.encode_history(tape, store, history)?;
        let mut logits = Vec::with_capacity(candidates.len());
        for &cand_id in candidates {
            let cand = self.encoder.encode(tape, &self.params, store, cand_id)?;
            let user_vec = self
                .user_module
                .forward(tape, &self.params, user, &history_nodes, cand);
            self.user_module_call_count.fetch_add(1, Ordering::Relaxed);
            logits.push(self.scorer.forward(tape, &self.params, user_vec, cand));
            self.scorer_call_count.fetch_add(1, Ordering::Relaxed);
        }
        Ok(logits)
    }

    /// Listwise loss over [positive, negatives...]: cross-entropy against
    /// the positive at index 0.
    pub fn matching_loss(
        &self,
        tape: &mut Tape,
        store: &ArticleStore,
        sample: &MatchingSample,
    ) -> Result<NodeId> {
        if self.spec.task() != Task::Matching {
            return Err(Error::Training(format!(
                "{} trains on click-through samples, not matching groups",
                self.spec.label()
            )));
        }
        let group = sample.group();
        let logits = self.score_group(tape, store, sample.user_id, &sample.history, &group)?;
        let row = tape.concat_cols(&logits);
        Ok(tape.softmax_cross_entropy(row, 0))
    }

    /// Pointwise binary cross-entropy on one labeled candidate.
    pub fn ctr_loss(
        &self,
        tape: &mut Tape,
        store: &ArticleStore,
        sample: &CtrSample,
    ) -> Result<NodeId> {
        if self.spec.task() != Task::Ctr {
            return Err(Error::Training(format!(
                "{} trains on matching groups, not click-through samples",
                self.spec.label()
            )));
        }
        let logits = self.score_group(
            tape,
            store,
            sample.user_id,
            &sample.history,
            std::slice::from_ref(&sample.candidate),
        )?;
        let labels = ndarray::Array2::from_elem((1, 1), sample.label as f64);
        Ok(tape.bce_with_logits(logits[0], labels))
    }

    /// Raw candidate scores for one impression, for ranking metrics. The
    /// history is truncated to its most recent `l_max` clicks, matching
    /// training-time sampling.
    pub fn score_impression(
        &self,
        store: &ArticleStore,
        imp: &Impression,
        l_max: usize,
    ) -> Result<RankedImpression> {
        let start = imp.history.len().saturating_sub(l_max);
        let history = &imp.history[start..];
        let cand_ids: Vec<NewsId> = imp.candidates.iter().map(|&(id, _)| id).collect();
        let labels: Vec<u8> = imp.candidates.iter().map(|&(_, l)| l).collect();

        let mut tape = Tape::new();
        let logits = self.score_group(&mut tape, store, imp.user_id, history, &cand_ids)?;
        let scores: Vec<f64> = logits.iter().map(|&n| tape.scalar(n)).collect();
        Ok(RankedImpression {
            impression_id: imp.impression_id.clone(),
            scores,
            labels,
        })
    }
}
