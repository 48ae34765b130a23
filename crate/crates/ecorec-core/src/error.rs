//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model assembly error: {0}")]
    Assembly(String),

    #[error("embedding table error: {0}")]
    Table(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("emission accounting error: {0}")]
    Emissions(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("{failed} of {total} seeded runs failed: seeds {seeds:?}; first error: {first}")]
    SeedRuns {
        failed: usize,
        total: usize,
        seeds: Vec<u64>,
        first: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
