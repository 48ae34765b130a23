//! MIND-format TSV parsers.
//!
//! news file: news_id, category, subcategory, title, abstract, url,
//! title_entities, abstract_entities (8 tab-separated fields).
//! behaviors file: impression_id, user_id, time, history, candidates
//! (5 fields; candidates carry "-1"/"-0" click suffixes).

use std::collections::HashMap;
use std::io::BufRead;

use crate::data::types::{Impression, Interner, NewsArticle, NewsId, UserId};
use crate::{Error, Result};

/// Lowercase word tokenization: maximal alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                cur.push(lc);
            }
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Parse a news TSV stream. Duplicate news ids keep the last occurrence
/// (a warning is logged); output preserves first-occurrence order.
pub fn parse_news<R: BufRead>(reader: R) -> Result<Vec<NewsArticle>> {
    let mut articles: Vec<NewsArticle> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("news line has {} fields, expected 8", fields.len()),
            });
        }
        let article = NewsArticle {
            news_id: fields[0].to_string(),
            category: fields[1].to_string(),
            subcategory: fields[2].to_string(),
            raw_title: fields[3].to_string(),
            title_words: tokenize(fields[3]),
            abstract_words: tokenize(fields[4]),
            title_tokens: Vec::new(),
        };
        match seen.get(&article.news_id) {
            Some(&idx) => {
                log::warn!(
                    "duplicate news id {} at line {}; keeping the later entry",
                    article.news_id,
                    lineno + 1
                );
                articles[idx] = article;
            }
            None => {
                seen.insert(article.news_id.clone(), articles.len());
                articles.push(article);
            }
        }
    }
    Ok(articles)
}

/// Resolve a news id, falling back to the reserved UNK article (index 0)
/// for ids absent from the corpus.
fn resolve_news(news: &Interner, name: &str) -> NewsId {
    NewsId(news.get(name).unwrap_or(0))
}

/// Parse a behaviors TSV stream. `news` must already contain the corpus
/// (ids not found map to the UNK article); users are interned on sight.
pub fn parse_behaviors<R: BufRead>(
    reader: R,
    news: &Interner,
    users: &mut Interner,
) -> Result<Vec<Impression>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(parse_behavior_line(&line, lineno + 1, news, users)?);
    }
    Ok(out)
}

fn parse_behavior_line(
    line: &str,
    lineno: usize,
    news: &Interner,
    users: &mut Interner,
) -> Result<Impression> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("behaviors line has {} fields, expected 5", fields.len()),
        });
    }
    let history: Vec<NewsId> = fields[3]
        .split_whitespace()
        .map(|id| resolve_news(news, id))
        .collect();
    let mut candidates = Vec::new();
    for tok in fields[4].split_whitespace() {
        let (id, label) = match tok.rsplit_once('-') {
            Some((id, "1")) => (id, 1u8),
            Some((id, "0")) => (id, 0u8),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("candidate {tok:?} lacks a -0/-1 click suffix"),
                })
            }
        };
        candidates.push((resolve_news(news, id), label));
    }
    if candidates.is_empty() {
        return Err(Error::Parse {
            line: lineno,
            msg: "impression has no candidates".to_string(),
        });
    }
    Ok(Impression {
        impression_id: fields[0].to_string(),
        user_id: UserId(users.intern(fields[1])),
        timestamp: fields[2].to_string(),
        history,
        candidates,
    })
}

/// Inverse of `parse_behaviors` for one impression, for round-trip checks
/// and synthetic corpus export.
pub fn serialize_impression(imp: &Impression, news: &Interner, users: &Interner) -> String {
    let history = imp
        .history
        .iter()
        .map(|n| news.name(n.0))
        .collect::<Vec<_>>()
        .join(" ");
    let candidates = imp
        .candidates
        .iter()
        .map(|(n, l)| format!("{}-{}", news.name(n.0), l))
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        "{}\t{}\t{}\t{}\t{}",
        imp.impression_id,
        users.name(imp.user_id.0),
        imp.timestamp,
        history,
        candidates
    )
}
