//! Experiment configuration: one structured file describing dataset,
//! variant selection, training, and emission accounting.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ShardFormat;
use crate::green::preset;
use crate::models::spec::{enumerate_grid, BaseModel, VariantKind, VariantSpec};
use crate::train::{PretrainCfg, TrainConfig};
use crate::{Error, Result};

/// Which leaderboard emission figure a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    /// Recommender training only. Variants sharing a cached table get
    /// identical figures, which is the point of the comparison.
    TrainOnly,
    /// Adds pretraining, table encoding, and evaluation.
    Total,
}

impl Default for AccountingMode {
    fn default() -> Self {
        AccountingMode::TrainOnly
    }
}

/// Variant selection: the whole 30-cell grid or named labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Selector {
    Keyword(String),
    Labels(Vec<String>),
}

impl Default for Selector {
    fn default() -> Self {
        Selector::Keyword("grid".to_string())
    }
}

/// Width and seed knobs shared by every assembled variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub embed_dim: usize,
    pub word_embed_dim: usize,
    pub attn_dim: usize,
    pub n_heads: usize,
    pub conv_kernel: usize,
    pub cross_depth: usize,
    pub plm_dim: usize,
    pub plm_seed: u64,
    pub plm_sleep_micros: u64,
    pub max_positions: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        let d = VariantSpec::default();
        ModelDims {
            embed_dim: d.embed_dim,
            word_embed_dim: d.word_embed_dim,
            attn_dim: d.attn_dim,
            n_heads: d.n_heads,
            conv_kernel: d.conv_kernel,
            cross_depth: d.cross_depth,
            plm_dim: d.plm_dim,
            plm_seed: d.plm_seed,
            plm_sleep_micros: d.plm_sleep_micros,
            max_positions: d.max_positions,
        }
    }
}

impl ModelDims {
    pub fn apply(&self, spec: &mut VariantSpec) {
        spec.embed_dim = self.embed_dim;
        spec.word_embed_dim = self.word_embed_dim;
        spec.attn_dim = self.attn_dim;
        spec.n_heads = self.n_heads;
        spec.conv_kernel = self.conv_kernel;
        spec.cross_depth = self.cross_depth;
        spec.plm_dim = self.plm_dim;
        spec.plm_seed = self.plm_seed;
        spec.plm_sleep_micros = self.plm_sleep_micros;
        spec.max_positions = self.max_positions;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset directory, or the literal `synth` for the generated corpus.
    pub dataset: String,
    pub out_dir: PathBuf,
    pub variants: Selector,
    pub seeds: Vec<u64>,
    pub emissions_preset: String,
    pub accounting: AccountingMode,
    pub shard_format: ShardFormat,
    pub train: TrainConfig,
    pub pretrain: PretrainCfg,
    pub model: ModelDims,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "synth".to_string(),
            out_dir: PathBuf::from("runs"),
            variants: Selector::default(),
            seeds: vec![1, 2, 3, 4, 5],
            emissions_preset: crate::green::PRESET_PAPER_RTX3090.to_string(),
            accounting: AccountingMode::default(),
            shard_format: ShardFormat::Ndjson,
            train: TrainConfig::default(),
            pretrain: PretrainCfg::default(),
            model: ModelDims::default(),
        }
    }
}

/// Keys `load_config` accepts, per table. Unknown keys are collected and
/// reported all at once instead of failing on the first.
const TOP_KEYS: &[&str] = &[
    "dataset",
    "out_dir",
    "variants",
    "seeds",
    "emissions_preset",
    "accounting",
    "shard_format",
    "train",
    "pretrain",
    "model",
];
const TRAIN_KEYS: &[&str] = &[
    "learning_rate",
    "batch_size",
    "k_neg",
    "l_max",
    "max_epochs",
    "patience",
    "seed",
    "max_train_samples",
    "max_val_impressions",
];
const PRETRAIN_KEYS: &[&str] = &[
    "arch",
    "embed_dim",
    "word_embed_dim",
    "attn_dim",
    "n_heads",
    "conv_kernel",
    "epochs",
    "batch_size",
    "learning_rate",
    "seed",
    "category_weight",
];
const MODEL_KEYS: &[&str] = &[
    "embed_dim",
    "word_embed_dim",
    "attn_dim",
    "n_heads",
    "conv_kernel",
    "cross_depth",
    "plm_dim",
    "plm_seed",
    "plm_sleep_micros",
    "max_positions",
];

fn collect_unknown(
    table: &toml::value::Table,
    allowed: &[&str],
    prefix: &str,
    out: &mut BTreeSet<String>,
) {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            out.insert(format!("{prefix}{key}"));
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let value: toml::Value = toml::from_str(text)?;
    let table = value
        .as_table()
        .ok_or_else(|| Error::Config("config root must be a table".into()))?;

    let mut unknown = BTreeSet::new();
    collect_unknown(table, TOP_KEYS, "", &mut unknown);
    for (name, keys) in [
        ("train", TRAIN_KEYS),
        ("pretrain", PRETRAIN_KEYS),
        ("model", MODEL_KEYS),
    ] {
        if let Some(sub) = table.get(name).and_then(|v| v.as_table()) {
            collect_unknown(sub, keys, &format!("{name}."), &mut unknown);
        }
    }
    if !unknown.is_empty() {
        let listed: Vec<String> = unknown.into_iter().collect();
        return Err(Error::Config(format!(
            "unknown config keys: {}",
            listed.join(", ")
        )));
    }

    let cfg: ExperimentConfig = value.try_into().map_err(Error::Toml)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        preset(&self.emissions_preset)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.seeds {
            if !seen.insert(*s) {
                return Err(Error::Config(format!("duplicate seed {s}")));
            }
        }
        self.train.validate()?;
        self.pretrain.validate()?;
        if self.resolve_specs()?.is_empty() {
            return Err(Error::Config("variant selector matches nothing".into()));
        }
        Ok(())
    }

    /// Expand the selector into concrete specs with this config's dims.
    pub fn resolve_specs(&self) -> Result<Vec<VariantSpec>> {
        let mut specs = match &self.variants {
            Selector::Keyword(word) if word == "grid" => enumerate_grid(),
            Selector::Keyword(other) => {
                vec![parse_label(other)?]
            }
            Selector::Labels(labels) => {
                let mut out = Vec::with_capacity(labels.len());
                for l in labels {
                    out.push(parse_label(l)?);
                }
                out
            }
        };
        for s in &mut specs {
            self.model.apply(s);
            s.validate()?;
        }
        Ok(specs)
    }

    /// Stable identity of one (config, spec) cell: the sha-256 of the
    /// canonical JSON of everything that affects its results.
    pub fn run_hash(&self, spec: &VariantSpec) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            dataset: &'a str,
            spec: &'a VariantSpec,
            train: &'a TrainConfig,
            pretrain: &'a PretrainCfg,
            seeds: &'a [u64],
            emissions_preset: &'a str,
        }
        let key = Key {
            dataset: &self.dataset,
            spec,
            train: &self.train,
            pretrain: &self.pretrain,
            seeds: &self.seeds,
            emissions_preset: &self.emissions_preset,
        };
        let json = serde_json::to_vec(&key).expect("key serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hex_string(&hasher.finalize())
    }
}

/// Parse a `NRMS-PREC` style label.
pub fn parse_label(label: &str) -> Result<VariantSpec> {
    let (base, kind) = label.split_once('-').ok_or_else(|| {
        Error::Config(format!(
            "variant label {label:?} is not of the form BASE-KIND"
        ))
    })?;
    let base: BaseModel = base.parse()?;
    let kind: VariantKind = kind.parse()?;
    Ok(VariantSpec::new(base, kind))
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
