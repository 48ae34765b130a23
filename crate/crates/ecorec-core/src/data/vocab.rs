//! Token vocabulary over article titles.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::types::NewsArticle;

/// Reserved token id for padding.
pub const PAD: u32 = 0;
/// Reserved token id for out-of-vocabulary words.
pub const UNK: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Frequency-ordered vocabulary over title words: ids 0/1 are reserved
    /// for pad/unk, remaining ids by frequency descending then lexicographic,
    /// so construction is order-independent and deterministic.
    pub fn build(articles: &[NewsArticle], min_freq: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for a in articles {
            for w in &a.title_words {
                *counts.entry(w.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = Vec::with_capacity(ranked.len() + 2);
        tokens.push("<pad>".to_string());
        tokens.push("<unk>".to_string());
        tokens.extend(ranked.into_iter().map(|(w, _)| w.to_string()));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Fill `title_tokens` for every article: ids padded/truncated to
/// `max_title_len`.
pub fn index_articles(articles: &mut [NewsArticle], vocab: &Vocabulary, max_title_len: usize) {
    for a in articles {
        let mut ids: Vec<u32> = a
            .title_words
            .iter()
            .take(max_title_len)
            .map(|w| vocab.id(w))
            .collect();
        ids.resize(max_title_len, PAD);
        a.title_tokens = ids;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(id: &str, title_words: &[&str]) -> NewsArticle {
        NewsArticle {
            news_id: id.to_string(),
            category: "c".to_string(),
            subcategory: "s".to_string(),
            raw_title: title_words.join(" "),
            title_words: title_words.iter().map(|s| s.to_string()).collect(),
            abstract_words: Vec::new(),
            title_tokens: Vec::new(),
        }
    }

    #[test]
    fn reserves_pad_and_unk_then_orders_by_frequency() {
        let articles = vec![article("N1", &["a", "b"]), article("N2", &["a", "c"])];
        let v = Vocabulary::build(&articles, 1);
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.id("<unk>"), UNK);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), 3);
        assert_eq!(v.id("c"), 4);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn min_freq_maps_rare_words_to_unk() {
        let articles = vec![article("N1", &["a", "b"]), article("N2", &["a", "c"])];
        let v = Vocabulary::build(&articles, 2);
        assert_eq!(v.id("a"), 2);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.id("c"), UNK);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn empty_corpus_keeps_only_reserved_tokens() {
        let v = Vocabulary::build(&[], 1);
        assert_eq!(v.len(), 2);
        assert_eq!(v.id("anything"), UNK);
    }

    #[test]
    fn construction_is_input_order_independent() {
        let a = vec![article("N1", &["x", "y"]), article("N2", &["z"])];
        let mut b = a.clone();
        b.reverse();
        let va = Vocabulary::build(&a, 1);
        let vb = Vocabulary::build(&b, 1);
        for w in ["x", "y", "z"] {
            assert_eq!(va.id(w), vb.id(w));
        }
    }

    #[test]
    fn indexing_pads_and_truncates() {
        let mut articles = vec![article("N1", &["a", "b", "c"]), article("N2", &["a"])];
        let v = Vocabulary::build(&articles, 1);
        index_articles(&mut articles, &v, 2);
        assert_eq!(articles[0].title_tokens, vec![v.id("a"), v.id("b")]);
        assert_eq!(articles[1].title_tokens, vec![v.id("a"), PAD]);
    }
}
