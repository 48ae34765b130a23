//! Recommender training configuration.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Published learning-rate grid; values off this grid train fine but warn.
pub const LR_GRID: [f64; 6] = [1e-5, 2e-5, 5e-5, 1e-4, 2e-4, 5e-4];
/// Published batch-size grid.
pub const BATCH_GRID: [usize; 6] = [64, 128, 256, 500, 1000, 5000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Negatives per positive in matching groups.
    pub k_neg: usize,
    /// History clicks kept (most recent).
    pub l_max: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-AUC improvement before stopping.
    pub patience: usize,
    /// Seeds model init, sample negatives, and batch order.
    pub seed: u64,
    /// Optional cap on training samples per epoch, for desk-scale runs.
    pub max_train_samples: Option<usize>,
    /// Optional cap on validation impressions scored per epoch.
    pub max_val_impressions: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            k_neg: 4,
            l_max: 30,
            max_epochs: 10,
            patience: 3,
            seed: 1,
            max_train_samples: None,
            max_val_impressions: None,
        }
    }
}

impl TrainConfig {
    /// Reject impossible values; warn (but allow) values off the published
    /// grids since they are defaults, not laws.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.k_neg == 0 {
            return Err(Error::Config("k_neg must be at least 1".into()));
        }
        if self.l_max == 0 {
            return Err(Error::Config("l_max must be at least 1".into()));
        }
        if !LR_GRID.iter().any(|&g| g == self.learning_rate) {
            log::warn!(
                "learning_rate {} is off the published grid {:?}",
                self.learning_rate,
                LR_GRID
            );
        }
        if !BATCH_GRID.contains(&self.batch_size) {
            log::warn!(
                "batch_size {} is off the published grid {:?}",
                self.batch_size,
                BATCH_GRID
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_sit_on_the_grids_and_validate() {
        let cfg = TrainConfig::default();
        assert!(LR_GRID.contains(&cfg.learning_rate));
        assert!(BATCH_GRID.contains(&cfg.batch_size));
        assert_eq!(cfg.k_neg, 4);
        assert_eq!(cfg.l_max, 30);
        assert_eq!(cfg.max_epochs, 10);
        assert_eq!(cfg.patience, 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn off_grid_values_pass_but_impossible_ones_fail() {
        let mut cfg = TrainConfig {
            learning_rate: 3e-4, // off-grid: allowed
            batch_size: 7,       // off-grid: allowed
            ..TrainConfig::default()
        };
        cfg.validate().unwrap();

        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        cfg.learning_rate = 1e-4;
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        cfg.batch_size = 64;
        cfg.max_epochs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn round_trips_through_json_with_defaults_filled() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"learning_rate": 2e-5}"#).unwrap();
        assert_eq!(cfg.learning_rate, 2e-5);
        assert_eq!(cfg.batch_size, 64);
        let s = serde_json::to_string(&cfg).unwrap();
        let back: TrainConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}
