//! Core dataset records. News and user keys are interned: an id is an index
//! into a name table, so samples stay compact at corpus scale while the
//! original strings remain recoverable for serialization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Interned article key. Index 0 is reserved for the UNK article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NewsId(pub u32);

/// Interned user key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId(pub u32);

/// String interner with stable, insertion-ordered indices.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

/// One news article as parsed from a MIND-format news file. Token ids are
/// filled in by vocabulary indexing; until then `title_tokens` is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsArticle {
    pub news_id: String,
    pub category: String,
    pub subcategory: String,
    pub raw_title: String,
    pub title_words: Vec<String>,
    pub abstract_words: Vec<String>,
    pub title_tokens: Vec<u32>,
}

/// One impression line: what the user saw and what they clicked.
/// History is ordered most recent last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Impression {
    pub impression_id: String,
    pub user_id: UserId,
    pub timestamp: String,
    pub history: Vec<NewsId>,
    pub candidates: Vec<(NewsId, u8)>,
}

impl Impression {
    pub fn n_positives(&self) -> usize {
        self.candidates.iter().filter(|(_, l)| *l == 1).count()
    }
}

/// Matching-task training instance: one positive plus `k_neg` sampled
/// negatives from the same impression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingSample {
    pub user_id: UserId,
    pub history: Vec<NewsId>,
    pub positive: NewsId,
    pub negatives: Vec<NewsId>,
}

impl MatchingSample {
    /// Candidate group in scoring order: positive first, then negatives.
    pub fn group(&self) -> Vec<NewsId> {
        let mut g = Vec::with_capacity(1 + self.negatives.len());
        g.push(self.positive);
        g.extend_from_slice(&self.negatives);
        g
    }
}

/// CTR-task training instance: one (user, candidate, label) triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtrSample {
    pub user_id: UserId,
    pub history: Vec<NewsId>,
    pub candidate: NewsId,
    pub label: u8,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interner_round_trips_names() {
        let mut i = Interner::new();
        let a = i.intern("N1");
        let b = i.intern("N2");
        let a2 = i.intern("N1");
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_eq!(i.name(a), "N1");
        assert_eq!(i.name(b), "N2");
        assert_eq!(i.len(), 2);
        assert_eq!(i.get("N2"), Some(b));
        assert_eq!(i.get("N3"), None);
    }

    #[test]
    fn matching_group_puts_positive_first() {
        let s = MatchingSample {
            user_id: UserId(0),
            history: vec![NewsId(1)],
            positive: NewsId(9),
            negatives: vec![NewsId(2), NewsId(3)],
        };
        assert_eq!(s.group(), vec![NewsId(9), NewsId(2), NewsId(3)]);
    }
}
