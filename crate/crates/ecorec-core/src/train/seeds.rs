//! Repeated runs across seeds with mean/std aggregation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::green::{CarbonIntensity, EmissionLedger, EmissionRecord, HardwareProfile, Phase};
use crate::models::spec::VariantSpec;
use crate::{Error, Result};

use super::config::TrainConfig;
use super::fit::{evaluate_and_track, train_end_to_end, train_oleo};
use super::table::EmbeddingTable;
use super::trace::{count_encodes, EncodeStats};

/// One completed run: test metrics plus the emissions it took to get them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    /// Validation AUC at the restored best epoch; model selection reads
    /// this, never the test columns above.
    pub val_auc: f64,
    pub n_scored: usize,
    pub n_skipped: usize,
    pub co2e_train: f64,
    pub co2e_evaluate: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// The raw emission records behind the grams above.
    pub records: Vec<EmissionRecord>,
}

/// Per-seed outcomes with population mean/std per metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregatedResult {
    pub outcomes: Vec<SeedOutcome>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub mrr_mean: f64,
    pub mrr_std: f64,
    pub ndcg5_mean: f64,
    pub ndcg5_std: f64,
    pub val_auc_mean: f64,
    pub co2e_train_mean: f64,
    pub co2e_evaluate_mean: f64,
    /// Final-epoch encoder-call stats from the first seed. The totals are
    /// determined by the data and config, not the seed, so one suffices.
    pub encode_stats: Option<EncodeStats>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AggregatedResult {
    fn from_outcomes(outcomes: Vec<SeedOutcome>) -> Self {
        let col = |f: fn(&SeedOutcome) -> f64| outcomes.iter().map(f).collect::<Vec<_>>();
        let (auc_mean, auc_std) = mean_std(&col(|o| o.auc));
        let (mrr_mean, mrr_std) = mean_std(&col(|o| o.mrr));
        let (ndcg5_mean, ndcg5_std) = mean_std(&col(|o| o.ndcg5));
        let (val_auc_mean, _) = mean_std(&col(|o| o.val_auc));
        let (co2e_train_mean, _) = mean_std(&col(|o| o.co2e_train));
        let (co2e_evaluate_mean, _) = mean_std(&col(|o| o.co2e_evaluate));
        AggregatedResult {
            outcomes,
            auc_mean,
            auc_std,
            mrr_mean,
            mrr_std,
            ndcg5_mean,
            ndcg5_std,
            val_auc_mean,
            co2e_train_mean,
            co2e_evaluate_mean,
            encode_stats: None,
        }
    }
}

/// Train and test once per seed, then aggregate. Each run gets its own
/// emission ledger; any failed seed fails the whole call, with every failed
/// seed listed.
pub fn run_seeds(
    spec: &VariantSpec,
    bundle: &DatasetBundle,
    cfg: &TrainConfig,
    seeds: &[u64],
    table: Option<Arc<EmbeddingTable>>,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
) -> Result<AggregatedResult> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut outcomes = Vec::with_capacity(seeds.len());
    let mut failures: Vec<(u64, Error)> = Vec::new();
    let mut encode_stats: Option<EncodeStats> = None;

    for &seed in seeds {
        let run_cfg = TrainConfig { seed, ..cfg.clone() };
        let mut ledger = EmissionLedger::new();
        let trained = match (&table, spec.variant_kind.is_oleo()) {
            (Some(t), true) => {
                train_oleo(spec, t.clone(), bundle, &run_cfg, profile, intensity, &mut ledger)
            }
            (None, false) => {
                train_end_to_end(spec, bundle, &run_cfg, profile, intensity, &mut ledger)
            }
            (None, true) => Err(Error::Config(format!(
                "{} needs a cached embedding table; run the encode step first",
                spec.label()
            ))),
            (Some(_), false) => Err(Error::Config(format!(
                "{} trains end to end; a cached table would be ignored",
                spec.label()
            ))),
        };
        let outcome = trained.and_then(|(model, trace)| {
            let report = evaluate_and_track(
                &model,
                &bundle.store,
                &bundle.test,
                run_cfg.l_max,
                run_cfg.max_val_impressions,
                profile,
                intensity,
                &mut ledger,
            )?;
            if encode_stats.is_none() {
                encode_stats = count_encodes(&trace, bundle.store.n_articles()).ok();
            }
            Ok(SeedOutcome {
                seed,
                auc: report.auc,
                mrr: report.mrr,
                ndcg5: report.ndcg5,
                val_auc: trace.best().map_or(0.0, |e| e.val_auc),
                n_scored: report.n_impressions_scored,
                n_skipped: report.n_impressions_skipped,
                co2e_train: ledger.aggregate(&[Phase::Train]),
                co2e_evaluate: ledger.aggregate(&[Phase::Evaluate]),
                best_epoch: trace.best_epoch,
                epochs_run: trace.epochs.len(),
                records: ledger.records.clone(),
            })
        });
        match outcome {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push((seed, e)),
        }
    }

    if !failures.is_empty() {
        return Err(Error::SeedRuns {
            failed: failures.len(),
            total: seeds.len(),
            seeds: failures.iter().map(|(s, _)| *s).collect(),
            first: failures[0].1.to_string(),
        });
    }
    let mut agg = AggregatedResult::from_outcomes(outcomes);
    agg.encode_stats = encode_stats;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synth, prepare_dataset, PrepareCfg, SynthCfg};
    use crate::green::{preset, PRESET_PAPER_RTX3090};
    use crate::models::spec::{BaseModel, VariantKind};

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

    fn cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 5e-3,
            batch_size: 32,
            k_neg: 2,
            l_max: 6,
            max_epochs: 1,
            patience: 1,
            seed: 0,
            max_train_samples: Some(120),
            max_val_impressions: Some(30),
        }
    }

    #[test]
    fn aggregates_mean_and_population_std() {
        let b = bundle();
        let (hw, ci) = preset(PRESET_PAPER_RTX3090).unwrap();
        let mut spec = VariantSpec::new(BaseModel::Lstur, VariantKind::Id);
        spec.embed_dim = 8;
        spec.attn_dim = 4;
        let agg = run_seeds(&spec, &b, &cfg(), &[1, 2, 3], None, &hw, &ci).unwrap();
        assert_eq!(agg.outcomes.len(), 3);
        let aucs: Vec<f64> = agg.outcomes.iter().map(|o| o.auc).collect();
        let mean = aucs.iter().sum::<f64>() / 3.0;
        let var = aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((agg.auc_mean - mean).abs() < 1e-12);
        assert!((agg.auc_std - var.sqrt()).abs() < 1e-12);
        assert!(agg.outcomes.iter().all(|o| o.co2e_train > 0.0));
        assert!(agg.outcomes.iter().all(|o| o.co2e_evaluate > 0.0));
    }

    #[test]
    fn single_seed_has_zero_std() {
        let b = bundle();
        let (hw, ci) = preset(PRESET_PAPER_RTX3090).unwrap();
        let mut spec = VariantSpec::new(BaseModel::Lstur, VariantKind::Id);
        spec.embed_dim = 8;
        spec.attn_dim = 4;
        let agg = run_seeds(&spec, &b, &cfg(), &[7], None, &hw, &ci).unwrap();
        assert_eq!(agg.auc_std, 0.0);
        assert_eq!(agg.mrr_std, 0.0);
    }

    #[test]
    fn failed_seeds_are_listed() {
        let b = bundle();
        let (hw, ci) = preset(PRESET_PAPER_RTX3090).unwrap();
        // An encode-once kind without a table fails every seed.
        let spec = VariantSpec::new(BaseModel::Nrms, VariantKind::BertOleo);
        let err = run_seeds(&spec, &b, &cfg(), &[4, 5], None, &hw, &ci).unwrap_err();
        match err {
            Error::SeedRuns { failed, total, seeds, .. } => {
                assert_eq!(failed, 2);
                assert_eq!(total, 2);
                assert_eq!(seeds, vec![4, 5]);
            }
            other => panic!("expected a seed-run error, got {other}"),
        }
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let b = bundle();
        let (hw, ci) = preset(PRESET_PAPER_RTX3090).unwrap();
        let spec = VariantSpec::new(BaseModel::Lstur, VariantKind::Id);
        assert!(run_seeds(&spec, &b, &cfg(), &[], None, &hw, &ci).is_err());
    }
}
