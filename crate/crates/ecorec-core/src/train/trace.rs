//! Run traces: what each training epoch did, counted exactly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Raw invocation counts for one epoch, read off the model's counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochCounts {
    pub content_encodes: u64,
    pub cached_lookups: u64,
    pub user_module_calls: u64,
    pub scorer_calls: u64,
}

/// One completed training epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based and contiguous.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_mrr: f64,
    pub val_ndcg5: f64,
    pub counts: EpochCounts,
    pub wall_secs: f64,
}

/// The full story of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrace {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the returned model carries (1-based).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl RunTrace {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// One JSON event per epoch plus a trailing summary event.
    pub fn write_ndjson<W: Write>(&self, w: &mut W) -> Result<()> {
        for e in &self.epochs {
            let mut v = serde_json::to_value(e)?;
            v.as_object_mut()
                .expect("epoch serializes to an object")
                .insert("event".into(), "epoch".into());
            writeln!(w, "{}", serde_json::to_string(&v)?)?;
        }
        writeln!(
            w,
            "{}",
            serde_json::json!({
                "event": "summary",
                "best_epoch": self.best_epoch,
                "stopped_early": self.stopped_early,
                "epochs_run": self.epochs.len(),
            })
        )?;
        Ok(())
    }

    /// Epochs must be contiguous from 1 and the best must be one of them.
    pub fn check(&self) -> Result<()> {
        for (i, e) in self.epochs.iter().enumerate() {
            if e.epoch != i + 1 {
                return Err(Error::Training(format!(
                    "epoch records must be contiguous from 1; found {} at position {}",
                    e.epoch, i
                )));
            }
            if e.wall_secs < 0.0 {
                return Err(Error::Training("negative wall-clock in trace".into()));
            }
        }
        if self.best().is_none() {
            return Err(Error::Training(format!(
                "best epoch {} has no record",
                self.best_epoch
            )));
        }
        Ok(())
    }
}

/// Per-article encode accounting for an epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub total_content_encodes: u64,
    pub distinct_articles: usize,
    pub per_article_mean: f64,
    pub user_module_calls: u64,
    pub scorer_calls: u64,
}

/// Stats for the latest epoch of `trace`, normalized by the corpus size.
pub fn count_encodes(trace: &RunTrace, corpus_size: usize) -> Result<EncodeStats> {
    if corpus_size == 0 {
        return Err(Error::Training(
            "cannot compute per-article encode stats for an empty corpus".into(),
        ));
    }
    let last = trace
        .last()
        .ok_or_else(|| Error::Training("trace holds no completed epoch".into()))?;
    Ok(EncodeStats {
        total_content_encodes: last.counts.content_encodes,
        distinct_articles: corpus_size,
        per_article_mean: last.counts.content_encodes as f64 / corpus_size as f64,
        user_module_calls: last.counts.user_module_calls,
        scorer_calls: last.counts.scorer_calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epoch(n: usize, encodes: u64) -> EpochRecord {
        EpochRecord {
            epoch: n,
            train_loss: 1.0 / n as f64,
            val_auc: 50.0 + n as f64,
            val_mrr: 20.0,
            val_ndcg5: 20.0,
            counts: EpochCounts {
                content_encodes: encodes,
                cached_lookups: 0,
                user_module_calls: 100,
                scorer_calls: 100,
            },
            wall_secs: 0.5,
        }
    }

    #[test]
    fn hundred_matching_samples_average_one_hundred_encodes_per_article() {
        // 100 samples, history 5, group 1+4, corpus of 10 articles.
        let trace = RunTrace {
            epochs: vec![epoch(1, 100 * (5 + 5))],
            best_epoch: 1,
            stopped_early: false,
        };
        let stats = count_encodes(&trace, 10).unwrap();
        assert_eq!(stats.total_content_encodes, 1000);
        assert_eq!(stats.distinct_articles, 10);
        assert_eq!(stats.per_article_mean, 100.0);
    }

    #[test]
    fn cached_epoch_has_zero_mean() {
        let trace = RunTrace {
            epochs: vec![epoch(1, 0)],
            best_epoch: 1,
            stopped_early: false,
        };
        let stats = count_encodes(&trace, 10).unwrap();
        assert_eq!(stats.total_content_encodes, 0);
        assert_eq!(stats.per_article_mean, 0.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let trace = RunTrace {
            epochs: vec![epoch(1, 5)],
            best_epoch: 1,
            stopped_early: false,
        };
        assert!(count_encodes(&trace, 0).is_err());
    }

    #[test]
    fn check_rejects_gaps_and_missing_best() {
        let good = RunTrace {
            epochs: vec![epoch(1, 10), epoch(2, 10)],
            best_epoch: 2,
            stopped_early: false,
        };
        good.check().unwrap();

        let gap = RunTrace {
            epochs: vec![epoch(1, 10), epoch(3, 10)],
            best_epoch: 1,
            stopped_early: false,
        };
        assert!(gap.check().is_err());

        let missing_best = RunTrace {
            epochs: vec![epoch(1, 10)],
            best_epoch: 4,
            stopped_early: true,
        };
        assert!(missing_best.check().is_err());
    }

    #[test]
    fn ndjson_emits_one_event_per_epoch_plus_summary() {
        let trace = RunTrace {
            epochs: vec![epoch(1, 10), epoch(2, 12)],
            best_epoch: 2,
            stopped_early: true,
        };
        let mut buf = Vec::new();
        trace.write_ndjson(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let first: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(first["event"], "epoch");
        assert_eq!(first["epoch"], 1);
        let last: serde_json::Value = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(last["event"], "summary");
        assert_eq!(last["best_epoch"], 2);
        assert_eq!(last["stopped_early"], true);
    }
}
