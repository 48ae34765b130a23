//! Impression-grouped ranking metrics: AUC, MRR, nDCG@5.
//!
//! Every metric is computed per impression and averaged uniformly over the
//! impressions it is defined on, then reported on a 0-100 percentage scale.
//! Skip rules are per metric: AUC needs at least one positive and one
//! negative; MRR and nDCG need at least one positive. `MetricReport`'s
//! scored/skipped counters describe the AUC rule.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One scored impression: parallel score and label lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImpression {
    pub impression_id: String,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl RankedImpression {
    fn validate(&self) -> Result<()> {
        if self.scores.len() != self.labels.len() {
            return Err(Error::Metrics(format!(
                "impression {}: {} scores but {} labels",
                self.impression_id,
                self.scores.len(),
                self.labels.len()
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metrics(format!(
                "impression {}: non-finite score",
                self.impression_id
            )));
        }
        Ok(())
    }

    fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    fn n_neg(&self) -> usize {
        self.labels.len() - self.n_pos()
    }
}

/// Per-run metric summary on the 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub n_impressions_scored: usize,
    pub n_impressions_skipped: usize,
}

/// Mann-Whitney AUC for one impression: average rank of the positives,
/// ties getting half credit. `None` when a class is missing.
fn impression_auc(imp: &RankedImpression) -> Option<f64> {
    let n_pos = imp.n_pos();
    let n_neg = imp.n_neg();
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Ascending by score; tie groups share their average rank.
    let mut order: Vec<usize> = (0..imp.scores.len()).collect();
    order.sort_by(|&a, &b| imp.scores[a].partial_cmp(&imp.scores[b]).expect("finite"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && imp.scores[order[j + 1]] == imp.scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if imp.labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Candidate indices in ranking order: score descending, ties broken by
/// original index (stable, deterministic).
fn ranking_order(imp: &RankedImpression) -> Vec<usize> {
    let mut order: Vec<usize> = (0..imp.scores.len()).collect();
    order.sort_by(|&a, &b| {
        imp.scores[b]
            .partial_cmp(&imp.scores[a])
            .expect("finite")
            .then(a.cmp(&b))
    });
    order
}

/// Mean reciprocal rank over the positives of one impression.
fn impression_mrr(imp: &RankedImpression) -> Option<f64> {
    let n_pos = imp.n_pos();
    if n_pos == 0 {
        return None;
    }
    let order = ranking_order(imp);
    let mut sum = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if imp.labels[idx] == 1 {
            sum += 1.0 / (rank0 + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

/// nDCG@k with gain 2^label − 1 and discount log₂(rank + 1).
fn impression_ndcg(imp: &RankedImpression, k: usize) -> Option<f64> {
    let n_pos = imp.n_pos();
    if n_pos == 0 {
        return None;
    }
    let order = ranking_order(imp);
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(rank0, &idx)| {
            let gain = (1u32 << imp.labels[idx]) as f64 - 1.0;
            gain / ((rank0 + 2) as f64).log2()
        })
        .sum();
    let ideal: f64 = (0..n_pos.min(k))
        .map(|rank0| 1.0 / ((rank0 + 2) as f64).log2())
        .sum();
    Some(dcg / ideal)
}

fn averaged<F>(impressions: &[RankedImpression], name: &str, f: F) -> Result<f64>
where
    F: Fn(&RankedImpression) -> Option<f64>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for imp in impressions {
        imp.validate()?;
        if let Some(v) = f(imp) {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Metrics(format!(
            "no impression is scorable for {name}"
        )));
    }
    Ok(sum / n as f64 * 100.0)
}

/// Grouped AUC percentage. Impressions missing a class are skipped.
pub fn grouped_auc(impressions: &[RankedImpression]) -> Result<f64> {
    averaged(impressions, "AUC", impression_auc)
}

/// MRR percentage. Impressions with no positive are skipped.
pub fn mrr(impressions: &[RankedImpression]) -> Result<f64> {
    averaged(impressions, "MRR", impression_mrr)
}

/// nDCG@k percentage. Impressions with no positive are skipped.
pub fn ndcg_at_k(impressions: &[RankedImpression], k: usize) -> Result<f64> {
    averaged(impressions, "nDCG", |imp| impression_ndcg(imp, k))
}

/// All three metrics in one pass. Identical to calling the standalone
/// functions on the same list; the scored/skipped counters follow the AUC
/// both-classes rule.
pub fn evaluate_ranking(impressions: &[RankedImpression]) -> Result<MetricReport> {
    let auc = grouped_auc(impressions)?;
    let mrr_v = mrr(impressions)?;
    let ndcg5 = ndcg_at_k(impressions, 5)?;
    let scored = impressions
        .iter()
        .filter(|i| i.n_pos() > 0 && i.n_neg() > 0)
        .count();
    Ok(MetricReport {
        auc,
        mrr: mrr_v,
        ndcg5,
        n_impressions_scored: scored,
        n_impressions_skipped: impressions.len() - scored,
    })
}

/// Read impressions from newline-delimited JSON records
/// (`{"impression_id", "scores", "labels"}`).
pub fn read_ranked_ndjson<R: BufRead>(r: R) -> Result<Vec<RankedImpression>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let imp: RankedImpression = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        imp.validate()?;
        out.push(imp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imp(scores: &[f64], labels: &[u8]) -> RankedImpression {
        RankedImpression {
            impression_id: "t".into(),
            scores: scores.to_vec(),
            labels: labels.to_vec(),
        }
    }

    /// Brute-force pair-counting AUC oracle: fraction of (positive,
    /// negative) pairs ranked correctly, ties counting half.
    fn pair_auc(imp: &RankedImpression) -> Option<f64> {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in imp.labels.iter().enumerate() {
            if li != 1 {
                continue;
            }
            for (j, &lj) in imp.labels.iter().enumerate() {
                if lj != 0 {
                    continue;
                }
                pairs += 1.0;
                if imp.scores[i] > imp.scores[j] {
                    wins += 1.0;
                } else if imp.scores[i] == imp.scores[j] {
                    wins += 0.5;
                }
            }
        }
        (pairs > 0.0).then(|| wins / pairs)
    }

    #[test]
    fn perfect_ranking_scores_100() {
        let imps = [imp(&[0.9, 0.1], &[1, 0])];
        assert_eq!(grouped_auc(&imps).unwrap(), 100.0);
        assert_eq!(mrr(&imps).unwrap(), 100.0);
        assert_eq!(ndcg_at_k(&imps, 5).unwrap(), 100.0);
    }

    #[test]
    fn full_tie_gives_half_credit_auc() {
        let imps = [imp(&[0.5, 0.5], &[1, 0])];
        assert_eq!(grouped_auc(&imps).unwrap(), 50.0);
    }

    #[test]
    fn auc_averages_across_impressions() {
        let imps = [imp(&[0.9, 0.1], &[1, 0]), imp(&[0.5, 0.5], &[1, 0])];
        assert_eq!(grouped_auc(&imps).unwrap(), 75.0);
    }

    #[test]
    fn rank_sum_matches_pair_counting_oracle() {
        // Deliberately tie-heavy and unbalanced.
        let cases = [
            imp(&[0.3, 0.3, 0.1, 0.9, 0.3], &[1, 0, 1, 0, 0]),
            imp(&[1.0, 1.0, 1.0], &[1, 1, 0]),
            imp(&[0.2, 0.8, 0.5, 0.5], &[0, 1, 1, 0]),
            imp(&[-1.0, -2.0, 0.0, -1.0], &[1, 0, 0, 1]),
        ];
        for c in &cases {
            let got = impression_auc(c).unwrap();
            let want = pair_auc(c).unwrap();
            assert!((got - want).abs() < 1e-12, "{got} vs {want} on {c:?}");
        }
    }

    #[test]
    fn mrr_single_positive_examples() {
        assert_eq!(mrr(&[imp(&[0.9, 0.5, 0.1], &[0, 1, 0])]).unwrap(), 50.0);
        let two = [
            imp(&[0.9, 0.1], &[1, 0]),
            imp(&[0.9, 0.8, 0.7, 0.1], &[0, 0, 0, 1]),
        ];
        assert_eq!(mrr(&two).unwrap(), 62.5);
    }

    #[test]
    fn mrr_averages_over_multiple_positives() {
        // Positives at ranks 1 and 3: (1 + 1/3) / 2.
        let imps = [imp(&[0.9, 0.5, 0.4], &[1, 0, 1])];
        let want = (1.0 + 1.0 / 3.0) / 2.0 * 100.0;
        assert!((mrr(&imps).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn mrr_breaks_ties_by_index() {
        // Tied scores: the earlier index ranks first.
        let imps = [imp(&[0.5, 0.5], &[0, 1])];
        assert_eq!(mrr(&imps).unwrap(), 50.0);
        let imps = [imp(&[0.5, 0.5], &[1, 0])];
        assert_eq!(mrr(&imps).unwrap(), 100.0);
    }

    #[test]
    fn ndcg_hand_computed_examples() {
        assert_eq!(ndcg_at_k(&[imp(&[0.9, 0.1], &[1, 0])], 5).unwrap(), 100.0);
        // Single positive at rank 2: 1/log2(3) ≈ 0.6309.
        let got = ndcg_at_k(&[imp(&[0.9, 0.5], &[0, 1])], 5).unwrap();
        assert!((got - 100.0 / 3f64.log2()).abs() < 1e-9);
        assert!((got - 63.09).abs() < 0.01);
        // Positive outside the cutoff contributes nothing.
        let got = ndcg_at_k(
            &[imp(&[0.9, 0.8, 0.7, 0.6, 0.5, 0.1], &[0, 0, 0, 0, 0, 1])],
            5,
        )
        .unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn skip_rules_are_per_metric() {
        let imps = [
            imp(&[0.9, 0.1], &[1, 0]),  // scorable by all
            imp(&[0.9, 0.1], &[1, 1]),  // no negative: AUC skips, MRR/nDCG score
            imp(&[0.9, 0.1], &[0, 0]),  // no positive: all skip
        ];
        assert_eq!(grouped_auc(&imps).unwrap(), 100.0);
        // MRR scores impressions 1 and 2: 1.0 and (1 + 1/2)/2 = 0.75.
        assert_eq!(mrr(&imps).unwrap(), 87.5);
        let report = evaluate_ranking(&imps).unwrap();
        assert_eq!(report.n_impressions_scored, 1);
        assert_eq!(report.n_impressions_skipped, 2);
        assert_eq!(report.auc, grouped_auc(&imps).unwrap());
        assert_eq!(report.mrr, mrr(&imps).unwrap());
        assert_eq!(report.ndcg5, ndcg_at_k(&imps, 5).unwrap());
    }

    #[test]
    fn nothing_scorable_is_an_error() {
        assert!(grouped_auc(&[imp(&[0.9], &[1])]).is_err());
        assert!(mrr(&[imp(&[0.9], &[0])]).is_err());
        assert!(ndcg_at_k(&[imp(&[0.9], &[0])], 5).is_err());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let bad = RankedImpression {
            impression_id: "x".into(),
            scores: vec![0.1, 0.2],
            labels: vec![1],
        };
        assert!(grouped_auc(&[bad]).is_err());
    }

    #[test]
    fn ndjson_round_trip() {
        let imps = [imp(&[0.4, 0.2], &[1, 0]), imp(&[0.1, 0.9], &[0, 1])];
        let mut buf = Vec::new();
        for i in &imps {
            serde_json::to_writer(&mut buf, i).unwrap();
            buf.push(b'\n');
        }
        let back = read_ranked_ndjson(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.as_slice(), imps.as_slice());
    }
}
