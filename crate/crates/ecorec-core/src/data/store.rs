//! Indexed article storage used by models and encoders.

use crate::data::types::{Interner, NewsArticle, NewsId};
use crate::data::vocab::Vocabulary;
use crate::{Error, Result};

/// The corpus in model-facing form: a dense row per article holding padded
/// title token ids, the true title length, a category id, and the raw title
/// text (for external encoders with their own tokenizers). Row 0 is the
/// reserved UNK article (empty title) that unknown references resolve to.
#[derive(Debug, Clone)]
pub struct ArticleStore {
    pub news: Interner,
    pub vocab: Vocabulary,
    pub max_title_len: usize,
    title_ids: Vec<u32>,
    title_lens: Vec<u16>,
    categories: Vec<u32>,
    pub category_names: Interner,
    raw_titles: Vec<String>,
}

impl ArticleStore {
    /// Build from an indexed corpus (articles must already carry
    /// `title_tokens` of length `max_title_len`).
    pub fn build(
        articles: &[NewsArticle],
        vocab: Vocabulary,
        max_title_len: usize,
    ) -> Result<Self> {
        let mut news = Interner::new();
        let mut category_names = Interner::new();
        news.intern("<unk>");
        category_names.intern("<unk>");

        let n = articles.len() + 1;
        let mut title_ids = vec![crate::data::vocab::PAD; n * max_title_len];
        let mut title_lens = vec![0u16; n];
        let mut categories = vec![0u32; n];
        let mut raw_titles = vec![String::new(); n];

        for (i, a) in articles.iter().enumerate() {
            let row = i + 1;
            let id = news.intern(&a.news_id);
            if id as usize != row {
                return Err(Error::Data(format!(
                    "duplicate news id {} in corpus",
                    a.news_id
                )));
            }
            if a.title_tokens.len() != max_title_len {
                return Err(Error::Data(format!(
                    "article {} has {} title tokens, expected {} (index the corpus first)",
                    a.news_id,
                    a.title_tokens.len(),
                    max_title_len
                )));
            }
            title_ids[row * max_title_len..(row + 1) * max_title_len]
                .copy_from_slice(&a.title_tokens);
            title_lens[row] = a.title_words.len().min(max_title_len) as u16;
            categories[row] = category_names.intern(&a.category);
            raw_titles[row] = a.raw_title.clone();
        }

        Ok(Self {
            news,
            vocab,
            max_title_len,
            title_ids,
            title_lens,
            categories,
            category_names,
            raw_titles,
        })
    }

    pub fn n_articles(&self) -> usize {
        self.title_lens.len()
    }

    /// Padded title token ids for one article.
    pub fn title_ids(&self, id: NewsId) -> &[u32] {
        let r = id.0 as usize;
        &self.title_ids[r * self.max_title_len..(r + 1) * self.max_title_len]
    }

    /// Title token ids without padding; empty for the UNK article.
    pub fn title_prefix(&self, id: NewsId) -> &[u32] {
        &self.title_ids(id)[..self.title_len(id)]
    }

    pub fn title_len(&self, id: NewsId) -> usize {
        self.title_lens[id.0 as usize] as usize
    }

    pub fn category(&self, id: NewsId) -> u32 {
        self.categories[id.0 as usize]
    }

    pub fn raw_title(&self, id: NewsId) -> &str {
        &self.raw_titles[id.0 as usize]
    }

    pub fn id_of(&self, name: &str) -> Option<NewsId> {
        self.news.get(name).map(NewsId)
    }

    pub fn id_name(&self, id: NewsId) -> Option<&str> {
        if (id.0 as usize) < self.news.len() {
            Some(self.news.name(id.0))
        } else {
            None
        }
    }

    /// All article ids in row order, UNK included.
    pub fn ids(&self) -> impl Iterator<Item = NewsId> + '_ {
        (0..self.n_articles() as u32).map(NewsId)
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }
}
