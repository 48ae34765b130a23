//! Append-only newline-delimited JSON result store, keyed by run hash.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::green::EmissionRecord;
use crate::models::spec::VariantSpec;
use crate::train::{EncodeStats, SeedOutcome, TrainConfig};
use crate::{Error, Result};

/// One completed (config, spec) cell: everything the leaderboard needs,
/// plus enough provenance to recompute the aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub dataset: String,
    pub spec: VariantSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub outcomes: Vec<SeedOutcome>,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub mrr_mean: f64,
    pub mrr_std: f64,
    pub ndcg5_mean: f64,
    pub ndcg5_std: f64,
    /// Mean best-epoch validation AUC; cell selection reads this.
    pub val_auc_mean: f64,
    /// Mean per-seed recommender-training grams.
    pub co2e_train: f64,
    /// Grams for everything else a cell consumed: shared pretraining and
    /// table encoding counted once, plus mean per-seed evaluation.
    pub co2e_other: f64,
    /// Every emission record behind the grams above.
    pub records: Vec<EmissionRecord>,
    pub encode_stats: Option<EncodeStats>,
    /// Source-reported sustainability score for imported reference rows;
    /// freshly trained rows compute theirs from AUC and grams instead.
    pub apc_source: Option<f64>,
    /// Unix seconds when the cell finished.
    pub finished_at: u64,
}

impl RunResult {
    /// Grams under an accounting mode: training only, or training plus
    /// everything else.
    pub fn co2e(&self, total: bool) -> f64 {
        if total {
            self.co2e_train + self.co2e_other
        } else {
            self.co2e_train
        }
    }
}

/// Append one result as a single line. The write goes through one
/// `write_all` on an append-mode handle, so concurrent writers interleave
/// whole lines rather than bytes.
pub fn persist(result: &RunResult, store_path: &Path) -> Result<()> {
    if let Some(parent) = store_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut line = serde_json::to_vec(result)?;
    line.push(b'\n');
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(store_path)?;
    f.write_all(&line)?;
    Ok(())
}

/// Read the store, later lines replacing earlier ones with the same hash.
/// Rows come back in first-seen order, which keeps renders stable across
/// re-runs.
pub fn read_store(store_path: &Path) -> Result<Vec<RunResult>> {
    let f = std::fs::File::open(store_path).map_err(|e| {
        Error::Config(format!("cannot open results store {store_path:?}: {e}"))
    })?;
    let mut by_hash: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<RunResult> = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RunResult = serde_json::from_str(&line).map_err(|e| {
            Error::Config(format!(
                "results store {store_path:?} line {}: {e}",
                lineno + 1
            ))
        })?;
        match by_hash.get(&row.config_hash) {
            Some(&i) => rows[i] = row,
            None => {
                by_hash.insert(row.config_hash.clone(), rows.len());
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// The hashes already completed, for idempotent re-runs.
pub fn completed_hashes(store_path: &Path) -> Result<std::collections::HashSet<String>> {
    if !store_path.exists() {
        return Ok(Default::default());
    }
    Ok(read_store(store_path)?
        .into_iter()
        .map(|r| r.config_hash)
        .collect())
}
