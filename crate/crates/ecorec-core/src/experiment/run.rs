//! Grid execution: prepare data once, build cached tables once, run every
//! selected variant, persist incrementally.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::data::{generate_synth, prepare_dataset, prepare_from_dir, DatasetBundle, PrepareCfg, SynthCfg};
use crate::green::{
    preset, track_phase, CarbonIntensity, EmissionLedger, EmissionRecord, HardwareProfile, Phase,
};
use crate::models::spec::{VariantKind, VariantSpec};
use crate::models::{PlmBackend, StubPlm};
use crate::train::{
    encode_once, pretrain_content_encoder, run_seeds, EmbeddingTable, PlmVectorSource,
    TableProvenance,
};
use crate::{Error, Result};

use super::config::ExperimentConfig;
use super::store::{completed_hashes, persist, RunResult};

/// What one `run_experiment` invocation did.
#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    /// Labels trained and persisted by this invocation.
    pub completed: Vec<String>,
    /// Labels whose hash was already in the store.
    pub skipped: Vec<String>,
    /// (label, error) for cells that failed; the rest continued.
    pub failures: Vec<(String, String)>,
}

impl GridOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} trained, {} skipped (already done), {} failed",
            self.completed.len(),
            self.skipped.len(),
            self.failures.len()
        );
        for (label, err) in &self.failures {
            s.push_str(&format!("\n  {label}: {err}"));
        }
        s
    }
}

pub fn results_path(out_dir: &Path) -> PathBuf {
    out_dir.join("results.ndjson")
}

/// Load the dataset an ExperimentConfig names: a directory in either MIND
/// layout, or the literal `synth` for the built-in generated corpus.
pub fn load_bundle(dataset: &str) -> Result<DatasetBundle> {
    if dataset == "synth" {
        let corpus = generate_synth(&SynthCfg::default());
        prepare_dataset(
            vec![corpus.news_tsv.as_bytes()],
            corpus.train_tsv.as_bytes(),
            corpus.dev_tsv.as_bytes(),
            &PrepareCfg::default(),
        )
    } else {
        prepare_from_dir(Path::new(dataset), &PrepareCfg::default())
    }
}

/// Where a cached table for this config lives. The name carries a digest
/// of everything the vectors depend on, so a config change can never pick
/// up a stale file.
pub fn table_path(cfg: &ExperimentConfig, provenance: TableProvenance) -> PathBuf {
    use sha2::{Digest, Sha256};
    let (stem, key) = match provenance {
        TableProvenance::PretrainedEncoder => (
            "prec",
            serde_json::json!({ "dataset": cfg.dataset, "pretrain": cfg.pretrain }),
        ),
        TableProvenance::PlmDirect => (
            "plm",
            serde_json::json!({
                "dataset": cfg.dataset,
                "plm_dim": cfg.model.plm_dim,
                "plm_seed": cfg.model.plm_seed,
            }),
        ),
    };
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&key).expect("key serializes"));
    let digest = super::config::hex_string(&hasher.finalize());
    cfg.out_dir
        .join("tables")
        .join(format!("{stem}-{}.ntbl", &digest[..12]))
}

/// Build the cached table this config describes, or reload it if an earlier
/// invocation already wrote it. Returns the table, the emission records its
/// construction cost (empty on reload), and whether it was reloaded.
pub fn build_or_load_table(
    cfg: &ExperimentConfig,
    provenance: TableProvenance,
    bundle: &DatasetBundle,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
) -> Result<(Arc<EmbeddingTable>, Vec<EmissionRecord>, bool)> {
    let path = table_path(cfg, provenance);
    if path.exists() {
        let table = EmbeddingTable::load(&path)?;
        if table.provenance != provenance {
            return Err(Error::Table(format!(
                "cached table {} was built by {}",
                path.display(),
                table.provenance.describe()
            )));
        }
        return Ok((Arc::new(table), Vec::new(), true));
    }

    let mut ledger = EmissionLedger::new();
    let table = match provenance {
        TableProvenance::PretrainedEncoder => {
            let encoder = pretrain_content_encoder(
                &bundle.store,
                &cfg.pretrain,
                profile,
                intensity,
                &mut ledger,
            )?;
            track_phase(&mut ledger, Phase::EncodeOnce, profile, intensity, || {
                encode_once(&encoder, &bundle.store)
            })?
        }
        TableProvenance::PlmDirect => {
            let backend: Arc<dyn PlmBackend> =
                Arc::new(StubPlm::new(cfg.model.plm_dim, cfg.model.plm_seed));
            let source = PlmVectorSource::new(backend);
            track_phase(&mut ledger, Phase::EncodeOnce, profile, intensity, || {
                encode_once(&source, &bundle.store)
            })?
        }
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    table.save(&path)?;
    Ok((Arc::new(table), ledger.records.clone(), false))
}

/// Cached-table artifacts shared across the encode-once cells of one grid,
/// with the emission records their construction cost.
struct TableCache {
    tables: HashMap<TableProvenance, (Arc<EmbeddingTable>, Vec<EmissionRecord>)>,
}

impl TableCache {
    fn new() -> Self {
        TableCache {
            tables: HashMap::new(),
        }
    }

    fn get(
        &mut self,
        kind: VariantKind,
        cfg: &ExperimentConfig,
        bundle: &DatasetBundle,
        profile: &HardwareProfile,
        intensity: &CarbonIntensity,
    ) -> Result<(Arc<EmbeddingTable>, Vec<EmissionRecord>)> {
        let provenance = match kind {
            VariantKind::Prec => TableProvenance::PretrainedEncoder,
            VariantKind::BertOleo => TableProvenance::PlmDirect,
            other => {
                return Err(Error::Config(format!(
                    "{} is not a cached-table kind",
                    other.as_str()
                )))
            }
        };
        if let Some(hit) = self.tables.get(&provenance) {
            return Ok(hit.clone());
        }
        let (table, records, _) = build_or_load_table(cfg, provenance, bundle, profile, intensity)?;
        let entry = (table, records);
        self.tables.insert(provenance, entry.clone());
        Ok(entry)
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Run every selected spec against the shared dataset. Completed hashes
/// are skipped, failures are recorded without stopping the grid, and each
/// result is persisted as soon as it exists.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    cfg.validate()?;
    let specs = cfg.resolve_specs()?;
    let (profile, intensity) = preset(&cfg.emissions_preset)?;
    let store_path = results_path(&cfg.out_dir);
    let done = completed_hashes(&store_path)?;

    let bundle = load_bundle(&cfg.dataset)?;
    let mut tables = TableCache::new();
    let mut outcome = GridOutcome::default();

    for spec in &specs {
        let label = spec.label();
        let hash = cfg.run_hash(spec);
        if done.contains(&hash) {
            outcome.skipped.push(label);
            continue;
        }

        let run = run_one_spec(
            cfg, spec, &bundle, &mut tables, &profile, &intensity, hash,
        );
        match run {
            Ok(result) => {
                persist(&result, &store_path)?;
                outcome.completed.push(label);
            }
            Err(e) => outcome.failures.push((label, e.to_string())),
        }
    }
    Ok(outcome)
}

fn run_one_spec(
    cfg: &ExperimentConfig,
    spec: &VariantSpec,
    bundle: &DatasetBundle,
    tables: &mut TableCache,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
    hash: String,
) -> Result<RunResult> {
    let (table, build_records) = if spec.variant_kind.is_oleo() {
        let (t, recs) = tables.get(spec.variant_kind, cfg, bundle, profile, intensity)?;
        (Some(t), recs)
    } else {
        (None, Vec::new())
    };

    let agg = run_seeds(
        spec,
        bundle,
        &cfg.train,
        &cfg.seeds,
        table,
        profile,
        intensity,
    )?;

    let build_grams: f64 = build_records.iter().map(|r| r.co2e_grams).sum();
    let mut records = build_records;
    for o in &agg.outcomes {
        records.extend(o.records.iter().cloned());
    }

    Ok(RunResult {
        config_hash: hash,
        dataset: cfg.dataset.clone(),
        spec: spec.clone(),
        train: cfg.train.clone(),
        seeds: cfg.seeds.clone(),
        auc_mean: agg.auc_mean,
        auc_std: agg.auc_std,
        mrr_mean: agg.mrr_mean,
        mrr_std: agg.mrr_std,
        ndcg5_mean: agg.ndcg5_mean,
        ndcg5_std: agg.ndcg5_std,
        val_auc_mean: agg.val_auc_mean,
        co2e_train: agg.co2e_train_mean,
        co2e_other: build_grams + agg.co2e_evaluate_mean,
        outcomes: agg.outcomes,
        records,
        encode_stats: agg.encode_stats,
        apc_source: None,
        finished_at: unix_now(),
    })
}
