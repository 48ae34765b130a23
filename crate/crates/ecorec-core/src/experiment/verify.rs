//! Dataset verification: recompute corpus statistics from the raw files and
//! compare them against the published figures for the two MIND releases.

use std::path::Path;

use crate::data::{
    dataset_stats, merge_articles, parse_behaviors, parse_news, Impression, Interner, NewsArticle,
    StatsReport,
};
use crate::{Error, Result};

/// Published statistics for one known dataset release. Counts are over the
/// union of the train and dev splits; density is the percentage of shown
/// candidate pairs out of all possible news x user pairs, as the stat
/// tables print it (four decimal places).
#[derive(Debug, Clone, Copy)]
pub struct ExpectedStats {
    pub name: &'static str,
    pub n_news: usize,
    pub n_users: usize,
    pub n_interactions: usize,
    pub n_samples: usize,
    pub density_pct: f64,
}

pub const KNOWN_DATASETS: [ExpectedStats; 2] = [
    ExpectedStats {
        name: "MIND-small",
        n_news: 65_238,
        n_users: 94_057,
        n_interactions: 347_727,
        n_samples: 8_381_093,
        density_pct: 0.1366,
    },
    ExpectedStats {
        name: "MIND-large",
        n_news: 104_151,
        n_users: 750_434,
        n_interactions: 3_958_501,
        n_samples: 95_447_571,
        density_pct: 0.1221,
    },
];

/// Outcome of verifying a dataset directory.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Statistics recomputed from the raw files.
    pub stats: StatsReport,
    /// Which known release the news count identifies, if any.
    pub identified_as: Option<&'static str>,
    /// One line per figure that disagrees; empty means every figure matched.
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    /// True when the dataset was identified and every figure matched.
    pub fn passed(&self) -> bool {
        self.identified_as.is_some() && self.mismatches.is_empty()
    }

    pub fn render(&self) -> String {
        let s = &self.stats;
        let mut out = String::new();
        out.push_str(&format!(
            "news {}  users {}  clicks {}  samples {}  density {:.4}%\n",
            s.n_news, s.n_users, s.n_interactions, s.n_samples, s.density_pct
        ));
        match self.identified_as {
            Some(name) if self.mismatches.is_empty() => {
                out.push_str(&format!("identified as {name}: all figures match\n"));
            }
            Some(name) => {
                out.push_str(&format!("identified as {name} by news count, but:\n"));
                for m in &self.mismatches {
                    out.push_str(&format!("  {m}\n"));
                }
            }
            None => {
                out.push_str("news count matches no known release; comparison skipped\n");
            }
        }
        out
    }
}

fn open(p: std::path::PathBuf) -> Result<std::io::BufReader<std::fs::File>> {
    std::fs::File::open(&p)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", p.display())))
}

/// Parse both splits of a dataset directory without any preparation or
/// filtering, so the counts reflect the raw files.
fn raw_parse(dir: &Path) -> Result<(Vec<NewsArticle>, Vec<Impression>)> {
    let (news_readers, behavior_readers): (Vec<_>, Vec<_>) =
        if dir.join("train").join("behaviors.tsv").exists() {
            (
                vec![
                    open(dir.join("train").join("news.tsv"))?,
                    open(dir.join("dev").join("news.tsv"))?,
                ],
                vec![
                    open(dir.join("train").join("behaviors.tsv"))?,
                    open(dir.join("dev").join("behaviors.tsv"))?,
                ],
            )
        } else {
            (
                vec![open(dir.join("news.tsv"))?],
                vec![
                    open(dir.join("behaviors_train.tsv"))?,
                    open(dir.join("behaviors_dev.tsv"))?,
                ],
            )
        };

    let mut lists = Vec::new();
    for r in news_readers {
        lists.push(parse_news(r)?);
    }
    let articles = merge_articles(lists);

    let mut news_ids = Interner::new();
    for a in &articles {
        news_ids.intern(&a.news_id);
    }
    let mut users = Interner::new();
    let mut impressions = Vec::new();
    for r in behavior_readers {
        impressions.extend(parse_behaviors(r, &news_ids, &mut users)?);
    }
    Ok((articles, impressions))
}

fn compare(stats: &StatsReport, want: &ExpectedStats) -> Vec<String> {
    let mut out = Vec::new();
    let mut count = |label: &str, got: usize, want: usize| {
        if got != want {
            out.push(format!("{label}: computed {got}, published {want}"));
        }
    };
    count("news", stats.n_news, want.n_news);
    count("users", stats.n_users, want.n_users);
    count("clicks", stats.n_interactions, want.n_interactions);
    count("samples", stats.n_samples, want.n_samples);
    let got_rounded = format!("{:.4}", stats.density_pct);
    let want_rounded = format!("{:.4}", want.density_pct);
    if got_rounded != want_rounded {
        out.push(format!(
            "density: computed {got_rounded}%, published {want_rounded}%"
        ));
    }
    out
}

/// Recompute the statistics of the dataset in `dir` and, when the news count
/// identifies a known release, check every published figure against it.
pub fn verify_dataset(dir: &Path) -> Result<VerifyReport> {
    let (articles, impressions) = raw_parse(dir)?;
    let stats = dataset_stats(&articles, &impressions);
    Ok(verify_stats(stats))
}

/// The comparison half of [`verify_dataset`], for stats computed elsewhere.
pub fn verify_stats(stats: StatsReport) -> VerifyReport {
    let expected = KNOWN_DATASETS.iter().find(|e| e.n_news == stats.n_news);
    match expected {
        Some(want) => VerifyReport {
            mismatches: compare(&stats, want),
            identified_as: Some(want.name),
            stats,
        },
        None => VerifyReport {
            stats,
            identified_as: None,
            mismatches: Vec::new(),
        },
    }
}

/// Verify a dataset already loaded by some other path, e.g. behaviors that
/// were streamed rather than read from a directory.
pub fn verify_parsed(articles: &[NewsArticle], impressions: &[Impression]) -> VerifyReport {
    verify_stats(dataset_stats(articles, impressions))
}
