//! Experiment orchestration: declarative configs resolved into variant
//! grids, executed idempotently, persisted to an append-only result store,
//! and rendered as a leaderboard.

mod config;
mod leaderboard;
mod run;
mod store;
mod verify;

pub use config::{
    load_config, parse_config, parse_label, AccountingMode, ExperimentConfig, ModelDims, Selector,
};
pub use leaderboard::{reference_table, render_leaderboard, render_rows, REFERENCE_IMPROVEMENT};
pub use run::{
    build_or_load_table, load_bundle, results_path, run_experiment, table_path, GridOutcome,
};
pub use store::{completed_hashes, persist, read_store, RunResult};
pub use verify::{
    verify_dataset, verify_parsed, verify_stats, ExpectedStats, VerifyReport, KNOWN_DATASETS,
};
