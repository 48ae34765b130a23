//! Corpus-level statistics and the density figure used for dataset
//! verification.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::types::{Impression, NewsArticle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_news: usize,
    pub n_users: usize,
    /// Positive candidate labels (clicks).
    pub n_interactions: usize,
    /// All candidate pairs shown.
    pub n_samples: usize,
    /// Percentage: samples / (news × users) × 100. This is the figure the
    /// reference stat tables print under "density".
    pub density_pct: f64,
    /// Percentage: interactions / (news × users) × 100, the reading the
    /// table captions describe; reported alongside for transparency.
    pub density_interactions_pct: f64,
}

/// Percentage density from raw counts.
pub fn density_from_counts(numerator: usize, n_news: usize, n_users: usize) -> f64 {
    if n_news == 0 || n_users == 0 {
        return 0.0;
    }
    numerator as f64 / (n_news as f64 * n_users as f64) * 100.0
}

pub fn dataset_stats(articles: &[NewsArticle], impressions: &[Impression]) -> StatsReport {
    let n_news = articles.len();
    let mut users: HashSet<u32> = HashSet::new();
    let mut n_interactions = 0usize;
    let mut n_samples = 0usize;
    for imp in impressions {
        users.insert(imp.user_id.0);
        n_samples += imp.candidates.len();
        n_interactions += imp.candidates.iter().filter(|(_, l)| *l == 1).count();
    }
    let n_users = users.len();
    StatsReport {
        n_news,
        n_users,
        n_interactions,
        n_samples,
        density_pct: density_from_counts(n_samples, n_news, n_users),
        density_interactions_pct: density_from_counts(n_interactions, n_news, n_users),
    }
}
