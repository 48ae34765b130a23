//! MIND-format dataset handling: parsing, vocabulary construction,
//! validation re-splitting, and training-sample materialization.

mod bundle;
mod parse;
mod sample;
mod shard;
mod split;
mod stats;
mod store;
mod synth;
mod types;
mod vocab;

pub use bundle::{merge_articles, prepare_dataset, prepare_from_dir, DatasetBundle, PrepareCfg};
pub use parse::{parse_behaviors, parse_news, serialize_impression, tokenize};
pub use sample::{make_ctr_samples, make_matching_samples};
pub use shard::{
    read_ctr_shard, read_matching_shard, write_ctr_shard, write_matching_shard, ShardFormat,
};
pub use split::split_validation;
pub use stats::{dataset_stats, density_from_counts, StatsReport};
pub use store::ArticleStore;
pub use synth::{generate as generate_synth, write_to_dir as write_synth_to_dir, SynthCfg, SynthCorpus};
pub use types::{CtrSample, Impression, Interner, MatchingSample, NewsArticle, NewsId, UserId};
pub use vocab::{index_articles, Vocabulary, PAD, UNK};
