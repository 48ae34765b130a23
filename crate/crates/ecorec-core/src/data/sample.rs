//! Training-sample materialization for the two task forms.
//!
//! Matching keeps every positive and samples `k_neg` negatives from the
//! same impression; CTR keeps every candidate pair as-is.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::types::{CtrSample, Impression, MatchingSample, NewsId};
use crate::{Error, Result};

/// Most recent `l_max` history entries (history is ordered oldest first).
fn truncate_history(history: &[NewsId], l_max: usize) -> Vec<NewsId> {
    let start = history.len().saturating_sub(l_max);
    history[start..].to_vec()
}

/// One sample per positive candidate. Negatives come from the same
/// impression: without replacement when enough exist, with replacement when
/// short, and from the split-wide negative pool when the impression has
/// none at all (logged).
pub fn make_matching_samples(
    impressions: &[Impression],
    k_neg: usize,
    l_max: usize,
    seed: u64,
) -> Result<Vec<MatchingSample>> {
    if k_neg == 0 {
        return Err(Error::Config("k_neg must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let global_pool: Vec<NewsId> = impressions
        .iter()
        .flat_map(|imp| imp.candidates.iter())
        .filter(|(_, l)| *l == 0)
        .map(|(id, _)| *id)
        .collect();

    let mut out = Vec::new();
    for imp in impressions {
        let negatives: Vec<NewsId> = imp
            .candidates
            .iter()
            .filter(|(_, l)| *l == 0)
            .map(|(id, _)| *id)
            .collect();
        for (cand, label) in &imp.candidates {
            if *label != 1 {
                continue;
            }
            let negs = if negatives.len() >= k_neg {
                let mut pool = negatives.clone();
                pool.partial_shuffle(&mut rng, k_neg);
                pool.truncate(k_neg);
                pool
            } else if !negatives.is_empty() {
                (0..k_neg)
                    .map(|_| negatives[rng.gen_range(0..negatives.len())])
                    .collect()
            } else if !global_pool.is_empty() {
                log::debug!(
                    "impression {} has a positive but no negatives; sampling from the split pool",
                    imp.impression_id
                );
                (0..k_neg)
                    .map(|_| global_pool[rng.gen_range(0..global_pool.len())])
                    .collect()
            } else {
                return Err(Error::Data(format!(
                    "impression {} has a positive but the split contains no negatives at all",
                    imp.impression_id
                )));
            };
            out.push(MatchingSample {
                user_id: imp.user_id,
                history: truncate_history(&imp.history, l_max),
                positive: *cand,
                negatives: negs,
            });
        }
    }
    Ok(out)
}

/// One sample per (impression, candidate) pair, labels preserved.
pub fn make_ctr_samples(impressions: &[Impression], l_max: usize) -> Vec<CtrSample> {
    let mut out = Vec::new();
    for imp in impressions {
        let history = truncate_history(&imp.history, l_max);
        for (cand, label) in &imp.candidates {
            out.push(CtrSample {
                user_id: imp.user_id,
                history: history.clone(),
                candidate: *cand,
                label: *label,
            });
        }
    }
    out
}
