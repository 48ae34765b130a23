//! Core library for the ecorec benchmark: a news-recommendation benchmarking
//! framework that trains model variants under two paradigms (end-to-end and
//! only-encode-once) and scores every run on both ranking accuracy and
//! carbon-emission-aware sustainability metrics.
//!
//! Module map:
//! - [`data`]: MIND-format parsing, validation re-splitting, vocabularies,
//!   and matching/CTR sample materialization.
//! - [`nn`]: a small deterministic reverse-mode autodiff over `ndarray`,
//!   with the layers the model zoo is built from.
//! - [`models`]: content encoders, user modules, scorers, and assembly of
//!   the 30-variant grid.
//! - [`train`]: both training paradigms, content-encoder pretraining,
//!   encode-once table construction, and encoder-invocation instrumentation.
//! - [`metrics`]: impression-grouped AUC / MRR / nDCG@5.
//! - [`green`]: per-phase energy and carbon accounting (CO2E, ApC).
//! - [`experiment`]: experiment configs, grid execution, result persistence,
//!   dataset verification, and leaderboard rendering.

pub mod data;
pub mod error;
pub mod experiment;
pub mod green;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
