//! The two training paradigms over one shared epoch loop.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{make_ctr_samples, make_matching_samples, DatasetBundle, Impression};
use crate::green::{track_phase, CarbonIntensity, EmissionLedger, HardwareProfile, Phase};
use crate::metrics::{evaluate_ranking, MetricReport, RankedImpression};
use crate::models::spec::{Task, VariantSpec};
use crate::models::{assemble_variant, RecModel};
use crate::nn::{Adam, Tape};
use crate::{Error, Result};

use super::config::TrainConfig;
use super::table::EmbeddingTable;
use super::trace::{EpochRecord, RunTrace};

enum Samples {
    Matching(Vec<crate::data::MatchingSample>),
    Ctr(Vec<crate::data::CtrSample>),
}

impl Samples {
    fn len(&self) -> usize {
        match self {
            Samples::Matching(v) => v.len(),
            Samples::Ctr(v) => v.len(),
        }
    }

    fn truncate(&mut self, n: usize) {
        match self {
            Samples::Matching(v) => v.truncate(n),
            Samples::Ctr(v) => v.truncate(n),
        }
    }
}

/// Score impressions against a store, optionally capped, with metrics.
pub fn evaluate_with_store(
    model: &RecModel,
    store: &crate::data::ArticleStore,
    impressions: &[Impression],
    l_max: usize,
    cap: Option<usize>,
) -> Result<MetricReport> {
    let n = cap.unwrap_or(impressions.len()).min(impressions.len());
    let ranked: Vec<RankedImpression> = impressions[..n]
        .iter()
        .map(|imp| model.score_impression(store, imp, l_max))
        .collect::<Result<_>>()?;
    evaluate_ranking(&ranked)
}

/// `evaluate_with_store` wrapped in the evaluate emission phase.
pub fn evaluate_and_track(
    model: &RecModel,
    store: &crate::data::ArticleStore,
    impressions: &[Impression],
    l_max: usize,
    cap: Option<usize>,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
    ledger: &mut EmissionLedger,
) -> Result<MetricReport> {
    track_phase(ledger, Phase::Evaluate, profile, intensity, || {
        evaluate_with_store(model, store, impressions, l_max, cap)
    })
}

/// Epoch loop shared by both paradigms: mini-batch Adam over per-sample
/// tapes, per-epoch validation, early stopping on validation AUC, best
/// checkpoint restored before returning.
fn fit(model: &mut RecModel, bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<RunTrace> {
    cfg.validate()?;
    let mut samples = match model.spec.task() {
        Task::Matching => Samples::Matching(make_matching_samples(
            &bundle.train,
            cfg.k_neg,
            cfg.l_max,
            cfg.seed,
        )?),
        Task::Ctr => Samples::Ctr(make_ctr_samples(&bundle.train, cfg.l_max)),
    };
    if samples.len() == 0 {
        return Err(Error::Training("no training samples".into()));
    }
    if let Some(cap) = cfg.max_train_samples {
        samples.truncate(cap.max(1));
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1); // distinct from the negative-sampling stream

    let mut adam = Adam::new(cfg.learning_rate);
    let mut tape = Tape::new();
    let mut epochs: Vec<EpochRecord> = Vec::new();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_snapshot = None;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        model.reset_counters();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                tape.clear();
                let loss = match &samples {
                    Samples::Matching(v) => model.matching_loss(&mut tape, &bundle.store, &v[i]),
                    Samples::Ctr(v) => model.ctr_loss(&mut tape, &bundle.store, &v[i]),
                }?;
                loss_sum += tape.scalar(loss);
                tape.backward(loss, scale, &mut model.params);
            }
            adam.step(&mut model.params);
        }
        let train_loss = loss_sum / samples.len() as f64;
        // Counters are read before validation so they cover exactly the
        // training pass.
        let counts = model.epoch_counts();

        let val = evaluate_with_store(
            model,
            &bundle.store,
            &bundle.val,
            cfg.l_max,
            cfg.max_val_impressions,
        )?;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_auc: val.auc,
            val_mrr: val.mrr,
            val_ndcg5: val.ndcg5,
            counts,
            wall_secs: started.elapsed().as_secs_f64(),
        });

        if val.auc > best_auc {
            best_auc = val.auc;
            best_epoch = epoch;
            best_snapshot = Some(model.params.snapshot());
        } else if epoch - best_epoch >= cfg.patience {
            stopped_early = true;
            break;
        }
    }

    if let Some(snap) = &best_snapshot {
        model.params.restore(snap);
    }
    let trace = RunTrace {
        epochs,
        best_epoch,
        stopped_early,
    };
    trace.check()?;
    Ok(trace)
}

/// Joint training: the content encoder sits in the gradient path and every
/// article occurrence is re-encoded.
pub fn train_end_to_end(
    spec: &VariantSpec,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
    ledger: &mut EmissionLedger,
) -> Result<(RecModel, RunTrace)> {
    if spec.variant_kind.is_oleo() {
        return Err(Error::Config(format!(
            "{} uses the encode-once pipeline; this entry point trains end to end",
            spec.label()
        )));
    }
    let mut model = assemble_variant(spec, &bundle.store, bundle.users.len(), None, cfg.seed)?;
    let trace = track_phase(ledger, Phase::Train, profile, intensity, || {
        fit(&mut model, bundle, cfg)
    })?;
    Ok((model, trace))
}

/// Cached-table training: the table stays frozen, only the projection, user
/// module, and scorer learn. Zero content encodes by construction, and that
/// is enforced, not assumed.
pub fn train_oleo(
    spec: &VariantSpec,
    table: Arc<EmbeddingTable>,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
    ledger: &mut EmissionLedger,
) -> Result<(RecModel, RunTrace)> {
    if !spec.variant_kind.is_oleo() {
        return Err(Error::Config(format!(
            "{} trains end to end; this entry point is for encode-once variants",
            spec.label()
        )));
    }
    table.check_covers(
        bundle
            .store
            .ids()
            .map(|id| bundle.store.id_name(id).expect("store row has a name")),
    )?;

    let mut model = assemble_variant(
        spec,
        &bundle.store,
        bundle.users.len(),
        Some(table),
        cfg.seed,
    )?;
    let trace = track_phase(ledger, Phase::Train, profile, intensity, || {
        fit(&mut model, bundle, cfg)
    })?;
    for e in &trace.epochs {
        if e.counts.content_encodes != 0 {
            return Err(Error::Training(format!(
                "paradigm violation: epoch {} performed {} content encodes",
                e.epoch, e.counts.content_encodes
            )));
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synth, prepare_dataset, PrepareCfg, SynthCfg};
    use crate::green::{preset, PRESET_PAPER_RTX3090};
    use crate::models::spec::{BaseModel, VariantKind};
    use crate::models::{PlmBackend, StubPlm};
    use crate::train::pretrain::{
        encode_once, pretrain_content_encoder, PlmVectorSource, PretrainCfg,
    };

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

    fn small(base: BaseModel, kind: VariantKind) -> VariantSpec {
        let mut s = VariantSpec::new(base, kind);
        s.embed_dim = 16;
        s.word_embed_dim = 16;
        s.attn_dim = 8;
        s.n_heads = 2;
        s.plm_dim = 24;
        s.max_positions = 8;
        s
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 5e-3, // off-grid on purpose: tests want speed
            batch_size: 32,
            k_neg: 2,
            l_max: 6,
            max_epochs: 3,
            patience: 2,
            seed: 1,
            max_train_samples: Some(300),
            max_val_impressions: Some(60),
        }
    }

    fn env() -> (HardwareProfile, CarbonIntensity) {
        preset(PRESET_PAPER_RTX3090).unwrap()
    }

    #[test]
    fn end_to_end_learns_the_separable_signal() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        let spec = small(BaseModel::Nrms, VariantKind::Text);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            max_epochs: 5,
            patience: 5,
            max_train_samples: None,
            max_val_impressions: None,
            ..quick_cfg()
        };
        let (model, trace) = train_end_to_end(&spec, &b, &cfg, &hw, &ci, &mut ledger).unwrap();
        let report = evaluate_with_store(&model, &b.store, &b.val, cfg.l_max, None).unwrap();
        assert!(
            report.auc >= 95.0,
            "synthetic topics are separable; got AUC {}",
            report.auc
        );
        assert!(trace.best_epoch >= 1);
        assert!(ledger.aggregate(&[Phase::Train]) > 0.0);
    }

    #[test]
    fn per_epoch_encodes_match_the_analytic_total() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        let spec = small(BaseModel::Naml, VariantKind::Text);
        let cfg = TrainConfig {
            max_epochs: 2,
            max_train_samples: None,
            ..quick_cfg()
        };
        let (_, trace) = train_end_to_end(&spec, &b, &cfg, &hw, &ci, &mut ledger).unwrap();

        let samples = make_matching_samples(&b.train, cfg.k_neg, cfg.l_max, cfg.seed).unwrap();
        let expected: u64 = samples
            .iter()
            .map(|s| (s.history.len() + 1 + s.negatives.len()) as u64)
            .sum();
        for e in &trace.epochs {
            assert_eq!(
                e.counts.content_encodes, expected,
                "epoch {} encode count",
                e.epoch
            );
        }
    }

    #[test]
    fn same_seed_reproduces_the_run_exactly() {
        let b = bundle();
        let (hw, ci) = env();
        let spec = small(BaseModel::Lstur, VariantKind::Id);
        let cfg = TrainConfig {
            max_epochs: 2,
            ..quick_cfg()
        };
        let mut l1 = EmissionLedger::new();
        let mut l2 = EmissionLedger::new();
        let (m1, t1) = train_end_to_end(&spec, &b, &cfg, &hw, &ci, &mut l1).unwrap();
        let (m2, t2) = train_end_to_end(&spec, &b, &cfg, &hw, &ci, &mut l2).unwrap();
        assert_eq!(m1.params.snapshot(), m2.params.snapshot());
        let a1: Vec<f64> = t1.epochs.iter().map(|e| e.val_auc).collect();
        let a2: Vec<f64> = t2.epochs.iter().map(|e| e.val_auc).collect();
        assert_eq!(a1, a2);
    }

    #[test]
    fn oleo_entry_point_rejects_end_to_end_kinds_and_vice_versa() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        let cfg = quick_cfg();

        let e2e_spec = small(BaseModel::Nrms, VariantKind::Text);
        let table = Arc::new(
            encode_once(
                &PlmVectorSource::new(Arc::new(StubPlm::new(24, 2))),
                &b.store,
            )
            .unwrap(),
        );
        assert!(
            train_oleo(&e2e_spec, table.clone(), &b, &cfg, &hw, &ci, &mut ledger).is_err()
        );

        let oleo_spec = small(BaseModel::Nrms, VariantKind::BertOleo);
        assert!(train_end_to_end(&oleo_spec, &b, &cfg, &hw, &ci, &mut ledger).is_err());
    }

    #[test]
    fn oleo_trains_with_zero_encodes_and_a_frozen_table() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        let spec = small(BaseModel::Dcn, VariantKind::BertOleo);
        let cfg = TrainConfig {
            max_epochs: 2,
            ..quick_cfg()
        };
        let table = Arc::new(
            encode_once(
                &PlmVectorSource::new(Arc::new(StubPlm::new(24, 5))),
                &b.store,
            )
            .unwrap(),
        );
        let before = table.to_bytes();
        let (model, trace) =
            train_oleo(&spec, table.clone(), &b, &cfg, &hw, &ci, &mut ledger).unwrap();
        assert!(trace.epochs.iter().all(|e| e.counts.content_encodes == 0));
        assert!(trace.epochs.iter().all(|e| e.counts.cached_lookups > 0));
        assert_eq!(table.to_bytes(), before, "table must be bitwise unchanged");

        let report = evaluate_with_store(&model, &b.store, &b.val, cfg.l_max, None).unwrap();
        assert!(report.auc.is_finite());
    }

    #[test]
    fn oleo_learns_the_separable_signal() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        // Full cached pipeline: masked pretraining on topic-pure titles
        // yields a topic-clustered table, then only the head learns.
        let mut pcfg = PretrainCfg::default();
        pcfg.embed_dim = 16;
        pcfg.word_embed_dim = 16;
        pcfg.attn_dim = 8;
        pcfg.n_heads = 2;
        pcfg.epochs = 20;
        pcfg.learning_rate = 5e-3;
        pcfg.batch_size = 16;
        let pre = pretrain_content_encoder(&b.store, &pcfg, &hw, &ci, &mut ledger).unwrap();
        let table = Arc::new(encode_once(&pre, &b.store).unwrap());

        let spec = small(BaseModel::Dcn, VariantKind::Prec);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            max_epochs: 5,
            patience: 5,
            max_train_samples: None,
            max_val_impressions: None,
            ..quick_cfg()
        };
        let (model, _) = train_oleo(&spec, table, &b, &cfg, &hw, &ci, &mut ledger).unwrap();
        let report = evaluate_with_store(&model, &b.store, &b.val, cfg.l_max, None).unwrap();
        assert!(
            report.auc >= 95.0,
            "cached-table training should separate topics; got AUC {}",
            report.auc
        );
    }

    #[test]
    fn missing_table_entry_is_named_in_the_error() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        let spec = small(BaseModel::Nrms, VariantKind::BertOleo);
        let cfg = quick_cfg();

        let mut partial = EmbeddingTable::new(super::super::table::TableProvenance::PlmDirect, 24);
        let plm = StubPlm::new(24, 2);
        for id in b.store.ids().take(3) {
            let words = crate::data::tokenize(b.store.raw_title(id));
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            partial
                .insert(b.store.id_name(id).unwrap(), &plm.encode_text(&refs))
                .unwrap();
        }
        let err = train_oleo(&spec, Arc::new(partial), &b, &cfg, &hw, &ci, &mut ledger)
            .unwrap_err();
        let missing = b.store.id_name(b.store.ids().nth(3).unwrap()).unwrap();
        assert!(err.to_string().contains(missing), "{err}");
    }

    #[test]
    fn early_stopping_restores_the_best_epoch() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        let spec = small(BaseModel::Nrms, VariantKind::Text);
        let cfg = TrainConfig {
            max_epochs: 8,
            patience: 2,
            ..quick_cfg()
        };
        let (model, trace) = train_end_to_end(&spec, &b, &cfg, &hw, &ci, &mut ledger).unwrap();
        let best = trace.best().unwrap();
        assert!(trace
            .epochs
            .iter()
            .all(|e| e.val_auc <= best.val_auc + 1e-12));
        if trace.stopped_early {
            let last = trace.last().unwrap();
            assert!(last.epoch - trace.best_epoch >= cfg.patience);
        }
        // Restored parameters reproduce the best epoch's validation AUC.
        let report = evaluate_with_store(
            &model,
            &b.store,
            &b.val,
            cfg.l_max,
            cfg.max_val_impressions,
        )
        .unwrap();
        assert!((report.auc - best.val_auc).abs() < 1e-9);
    }

    #[test]
    fn slow_encoder_makes_end_to_end_epochs_slower_than_oleo() {
        let b = bundle();
        let (hw, ci) = env();
        let mut ledger = EmissionLedger::new();
        let cfg = TrainConfig {
            max_epochs: 1,
            max_train_samples: Some(120),
            max_val_impressions: Some(10),
            ..quick_cfg()
        };

        let mut slow_spec = small(BaseModel::Nrms, VariantKind::PlmNr);
        slow_spec.plm_sleep_micros = 300;
        let (_, e2e_trace) =
            train_end_to_end(&slow_spec, &b, &cfg, &hw, &ci, &mut ledger).unwrap();

        let oleo_spec = small(BaseModel::Nrms, VariantKind::BertOleo);
        let backend: Arc<dyn PlmBackend> = Arc::new(StubPlm::new(24, 7));
        let table = Arc::new(encode_once(&PlmVectorSource::new(backend), &b.store).unwrap());
        let (_, oleo_trace) =
            train_oleo(&oleo_spec, table, &b, &cfg, &hw, &ci, &mut ledger).unwrap();

        let e2e_wall = e2e_trace.epochs[0].wall_secs;
        let oleo_wall = oleo_trace.epochs[0].wall_secs;
        assert!(
            e2e_wall > oleo_wall,
            "throttled encoder must dominate: end-to-end {e2e_wall}s vs cached {oleo_wall}s"
        );
    }
}
