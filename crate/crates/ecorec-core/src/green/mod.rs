//! Per-phase carbon accounting.
//!
//! Grams of CO₂-equivalent for a tracked phase are
//! `power_kw × duration_hours × grams_per_kwh`; accuracy-per-carbon is
//! `(AUC − 50) / grams × 100`. Phases are ledgered separately so a
//! fixed one-time cost (pretraining, table construction) can be included
//! or excluded from a run's total by policy.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    pub power_watts: f64,
}

impl HardwareProfile {
    pub fn new(name: &str, power_watts: f64) -> Result<Self> {
        if !(power_watts > 0.0) {
            return Err(Error::Emissions(format!(
                "power must be positive, got {power_watts}"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            power_watts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensity {
    pub region: String,
    pub grams_per_kwh: f64,
}

impl CarbonIntensity {
    pub fn new(region: &str, grams_per_kwh: f64) -> Result<Self> {
        if !(grams_per_kwh > 0.0) {
            return Err(Error::Emissions(format!(
                "carbon intensity must be positive, got {grams_per_kwh}"
            )));
        }
        Ok(Self {
            region: region.to_string(),
            grams_per_kwh,
        })
    }
}

/// The measurement preset the reference results were produced under:
/// a 350 W accelerator on a 722 g CO₂-eq/kWh grid.
pub const PRESET_PAPER_RTX3090: &str = "paper-rtx3090";

/// Named (hardware, intensity) presets. Unknown names list the registry.
pub fn preset(name: &str) -> Result<(HardwareProfile, CarbonIntensity)> {
    match name {
        PRESET_PAPER_RTX3090 => Ok((
            HardwareProfile::new("rtx3090", 350.0)?,
            CarbonIntensity::new("reference-grid", 722.0)?,
        )),
        other => Err(Error::Emissions(format!(
            "unknown emissions preset {other:?} (available: {PRESET_PAPER_RTX3090})"
        ))),
    }
}

/// Lifecycle phases a run's energy is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    EncodeOnce,
    Train,
    Evaluate,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Pretrain,
        Phase::EncodeOnce,
        Phase::Train,
        Phase::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::EncodeOnce => "encode_once",
            Phase::Train => "train",
            Phase::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub phase: Phase,
    pub duration_hours: f64,
    pub energy_kwh: f64,
    pub co2e_grams: f64,
}

/// Eq-form carbon mass: `(watts/1000) × hours × g/kWh`.
pub fn compute_co2e(power_watts: f64, duration_hours: f64, grams_per_kwh: f64) -> Result<f64> {
    for (name, v) in [
        ("power", power_watts),
        ("duration", duration_hours),
        ("intensity", grams_per_kwh),
    ] {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::Emissions(format!("{name} must be non-negative, got {v}")));
        }
    }
    Ok(power_watts / 1000.0 * duration_hours * grams_per_kwh)
}

/// Accuracy-per-carbon: percentage points of AUC above chance bought per
/// gram, scaled by 100.
pub fn compute_apc(auc_percent: f64, co2e_grams: f64) -> Result<f64> {
    if !(co2e_grams > 0.0) {
        return Err(Error::Emissions(format!(
            "accuracy-per-carbon is undefined at CO2E {co2e_grams}"
        )));
    }
    Ok((auc_percent - 50.0) / co2e_grams * 100.0)
}

/// Relative sustainability improvement, as a percentage of the baseline.
pub fn apc_improvement(apc_new: f64, apc_base: f64) -> Result<f64> {
    if !(apc_base > 0.0) {
        return Err(Error::Emissions(format!(
            "improvement rate needs a positive baseline, got {apc_base}"
        )));
    }
    Ok((apc_new - apc_base) / apc_base * 100.0)
}

/// Append-only per-run ledger of phase records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionLedger {
    pub records: Vec<EmissionRecord>,
}

impl EmissionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EmissionRecord) {
        self.records.push(record);
    }

    /// Total grams over the selected phases.
    pub fn aggregate(&self, include: &[Phase]) -> f64 {
        self.records
            .iter()
            .filter(|r| include.contains(&r.phase))
            .map(|r| r.co2e_grams)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.aggregate(&Phase::ALL)
    }
}

/// Run `work`, measure its wall-clock, and append an emission record to the
/// ledger. The record is appended even when `work` fails; the error is
/// then propagated.
pub fn track_phase<T, F>(
    ledger: &mut EmissionLedger,
    phase: Phase,
    profile: &HardwareProfile,
    intensity: &CarbonIntensity,
    work: F,
) -> Result<T>
where
    F: FnOnce() -> Result<T>,
{
    let start = Instant::now();
    let result = work();
    let duration_hours = start.elapsed().as_secs_f64() / 3600.0;
    let energy_kwh = profile.power_watts / 1000.0 * duration_hours;
    let co2e_grams = energy_kwh * intensity.grams_per_kwh;
    ledger.push(EmissionRecord {
        phase,
        duration_hours,
        energy_kwh,
        co2e_grams,
    });
    result
}
