//! The variant grid: 6 base models × 5 content-encoder substitutions.

use serde::{Deserialize, Serialize};

/// The six base recommenders. The first three score by user-candidate
/// matching; the last three are CTR models with native interaction scorers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BaseModel {
    Naml,
    Lstur,
    Nrms,
    Bst,
    Dcn,
    Din,
}

impl BaseModel {
    pub const ALL: [BaseModel; 6] = [
        BaseModel::Naml,
        BaseModel::Lstur,
        BaseModel::Nrms,
        BaseModel::Bst,
        BaseModel::Dcn,
        BaseModel::Din,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaseModel::Naml => "NAML",
            BaseModel::Lstur => "LSTUR",
            BaseModel::Nrms => "NRMS",
            BaseModel::Bst => "BST",
            BaseModel::Dcn => "DCN",
            BaseModel::Din => "DIN",
        }
    }

    pub fn task(self) -> Task {
        match self {
            BaseModel::Naml | BaseModel::Lstur | BaseModel::Nrms => Task::Matching,
            BaseModel::Bst | BaseModel::Dcn | BaseModel::Din => Task::Ctr,
        }
    }
}

impl std::str::FromStr for BaseModel {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NAML" => Ok(BaseModel::Naml),
            "LSTUR" => Ok(BaseModel::Lstur),
            "NRMS" => Ok(BaseModel::Nrms),
            "BST" => Ok(BaseModel::Bst),
            "DCN" => Ok(BaseModel::Dcn),
            "DIN" => Ok(BaseModel::Din),
            other => Err(crate::Error::Config(format!("unknown base model {other:?}"))),
        }
    }
}

/// How the content encoder is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VariantKind {
    /// Randomly initialized trainable id-lookup; no text processed.
    Id,
    /// The base model's native text encoder, trained end-to-end.
    Text,
    /// A pretrained language model in the gradient path, re-encoding
    /// articles on every occurrence.
    PlmNr,
    /// Frozen lookup over a table extracted directly from the language
    /// model, plus a learnable projection.
    BertOleo,
    /// Frozen lookup over a table produced by self-supervised content
    /// pretraining, plus a learnable projection.
    Prec,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::Id,
        VariantKind::Text,
        VariantKind::PlmNr,
        VariantKind::BertOleo,
        VariantKind::Prec,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Id => "ID",
            VariantKind::Text => "TEXT",
            VariantKind::PlmNr => "PLM_NR",
            VariantKind::BertOleo => "BERT_OLEO",
            VariantKind::Prec => "PREC",
        }
    }

    /// Kinds trained via the cached-table paradigm (frozen table, learnable
    /// projection) rather than end-to-end.
    pub fn is_oleo(self) -> bool {
        matches!(self, VariantKind::BertOleo | VariantKind::Prec)
    }
}

impl std::str::FromStr for VariantKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ID" => Ok(VariantKind::Id),
            "TEXT" => Ok(VariantKind::Text),
            "PLM_NR" => Ok(VariantKind::PlmNr),
            "BERT_OLEO" => Ok(VariantKind::BertOleo),
            "PREC" => Ok(VariantKind::Prec),
            other => Err(crate::Error::Config(format!("unknown variant kind {other:?}"))),
        }
    }
}

/// Training/evaluation task form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Softmax over a (1 positive + k negatives) group.
    Matching,
    /// Per-candidate click probability with binary cross-entropy.
    Ctr,
}

/// One grid point plus the architecture knobs its components read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantSpec {
    pub base_model: BaseModel,
    pub variant_kind: VariantKind,
    /// Dimension of every content vector and user vector.
    pub embed_dim: usize,
    pub word_embed_dim: usize,
    pub attn_dim: usize,
    pub n_heads: usize,
    pub conv_kernel: usize,
    pub cross_depth: usize,
    /// Output width of the external language-model backend.
    pub plm_dim: usize,
    pub plm_seed: u64,
    /// Artificial per-encode latency for the stub backend, used by cost
    /// experiments; zero means unthrottled.
    pub plm_sleep_micros: u64,
    /// Position-embedding capacity for sequence models (≥ history limit).
    pub max_positions: usize,
}

impl Default for VariantSpec {
    fn default() -> Self {
        Self {
            base_model: BaseModel::Naml,
            variant_kind: VariantKind::Text,
            embed_dim: 64,
            word_embed_dim: 64,
            attn_dim: 64,
            n_heads: 4,
            conv_kernel: 3,
            cross_depth: 2,
            plm_dim: 768,
            plm_seed: 7,
            plm_sleep_micros: 0,
            max_positions: 30,
        }
    }
}

impl VariantSpec {
    pub fn new(base_model: BaseModel, variant_kind: VariantKind) -> Self {
        Self {
            base_model,
            variant_kind,
            ..Self::default()
        }
    }

    /// Variant label like `NRMS-PREC`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.base_model.as_str(), self.variant_kind.as_str())
    }

    pub fn task(&self) -> Task {
        self.base_model.task()
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.embed_dim == 0 {
            return Err(crate::Error::Config("embed_dim must be positive".into()));
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(crate::Error::Config(format!(
                "embed_dim {} must divide into {} heads",
                self.embed_dim, self.n_heads
            )));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(crate::Error::Config("conv kernel must be odd".into()));
        }
        Ok(())
    }
}

/// All 30 grid points, base-major, kinds in declaration order.
pub fn enumerate_grid() -> Vec<VariantSpec> {
    let mut out = Vec::with_capacity(30);
    for base in BaseModel::ALL {
        for kind in VariantKind::ALL {
            out.push(VariantSpec::new(base, kind));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_exactly_30_unique_points() {
        let grid = enumerate_grid();
        assert_eq!(grid.len(), 30);
        let unique: std::collections::HashSet<_> = grid
            .iter()
            .map(|s| (s.base_model, s.variant_kind))
            .collect();
        assert_eq!(unique.len(), 30);
    }

    #[test]
    fn every_base_appears_with_all_five_kinds() {
        let grid = enumerate_grid();
        for base in BaseModel::ALL {
            let kinds: Vec<VariantKind> = grid
                .iter()
                .filter(|s| s.base_model == base)
                .map(|s| s.variant_kind)
                .collect();
            assert_eq!(kinds, VariantKind::ALL);
        }
    }

    #[test]
    fn task_split_matches_scorer_families() {
        assert_eq!(BaseModel::Naml.task(), Task::Matching);
        assert_eq!(BaseModel::Lstur.task(), Task::Matching);
        assert_eq!(BaseModel::Nrms.task(), Task::Matching);
        assert_eq!(BaseModel::Bst.task(), Task::Ctr);
        assert_eq!(BaseModel::Dcn.task(), Task::Ctr);
        assert_eq!(BaseModel::Din.task(), Task::Ctr);
    }

    #[test]
    fn labels_and_parsing_round_trip() {
        let spec = VariantSpec::new(BaseModel::Dcn, VariantKind::BertOleo);
        assert_eq!(spec.label(), "DCN-BERT_OLEO");
        assert_eq!("dcn".parse::<BaseModel>().unwrap(), BaseModel::Dcn);
        assert_eq!("bert-oleo".parse::<VariantKind>().unwrap(), VariantKind::BertOleo);
        assert!("bert".parse::<VariantKind>().is_err());
    }

    #[test]
    fn validation_catches_bad_dims() {
        let mut spec = VariantSpec::new(BaseModel::Nrms, VariantKind::Text);
        spec.embed_dim = 0;
        assert!(spec.validate().is_err());
        spec.embed_dim = 65;
        assert!(spec.validate().is_err());
        spec.embed_dim = 64;
        spec.conv_kernel = 4;
        assert!(spec.validate().is_err());
        spec.conv_kernel = 3;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn oleo_kinds_are_the_cached_ones() {
        assert!(!VariantKind::Id.is_oleo());
        assert!(!VariantKind::Text.is_oleo());
        assert!(!VariantKind::PlmNr.is_oleo());
        assert!(VariantKind::BertOleo.is_oleo());
        assert!(VariantKind::Prec.is_oleo());
    }
}
