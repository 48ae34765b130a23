//! Fixture builders shared by the criterion benches.

use ecorec_core::data::{generate_synth, prepare_dataset, DatasetBundle, PrepareCfg, SynthCfg};
use ecorec_core::metrics::RankedImpression;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Desk-scale corpus: big enough to time, small enough to rebuild per run.
pub fn desk_bundle() -> DatasetBundle {
    let cfg = SynthCfg {
        n_train_impressions: 800,
        ..SynthCfg::default()
    };
    let corpus = generate_synth(&cfg);
    prepare_dataset(
        vec![corpus.news_tsv.as_bytes()],
        corpus.train_tsv.as_bytes(),
        corpus.dev_tsv.as_bytes(),
        &PrepareCfg::default(),
    )
    .expect("generated corpus prepares")
}

/// `n` impressions of `k` candidates with one positive each. Scores overlap
/// across the label classes so the metrics do real sorting work.
pub fn scored_impressions(n: usize, k: usize, seed: u64) -> Vec<RankedImpression> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut labels = vec![0u8; k];
            labels[rng.gen_range(0..k)] = 1;
            let scores = labels
                .iter()
                .map(|&l| rng.gen::<f64>() + f64::from(l) * 0.3)
                .collect();
            RankedImpression {
                impression_id: format!("I{i}"),
                scores,
                labels,
            }
        })
        .collect()
}
