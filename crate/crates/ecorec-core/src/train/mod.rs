//! Training: configs, the two paradigms, pretraining, the cached embedding
//! table, seed aggregation, and run traces.

mod checkpoint;
mod config;
mod fit;
mod pretrain;
mod seeds;
mod table;
mod trace;

pub use checkpoint::Checkpoint;
pub use config::{TrainConfig, BATCH_GRID, LR_GRID};
pub use fit::{evaluate_and_track, evaluate_with_store, train_end_to_end, train_oleo};
pub use pretrain::{
    encode_once, pretrain_content_encoder, pretrain_with, MaskedReconstruction, PlmVectorSource,
    PretrainArch, PretrainCfg, PretrainObjective, PretrainedEncoder, VectorSource,
};
pub use seeds::{run_seeds, AggregatedResult, SeedOutcome};
pub use table::{EmbeddingTable, TableProvenance};
pub use trace::{count_encodes, EncodeStats, EpochCounts, EpochRecord, RunTrace};
