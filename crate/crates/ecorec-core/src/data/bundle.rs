//! End-to-end dataset preparation: parse, index, split, report.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::parse::{parse_behaviors, parse_news};
use crate::data::split::split_validation;
use crate::data::stats::{dataset_stats, StatsReport};
use crate::data::store::ArticleStore;
use crate::data::types::{Impression, Interner, NewsArticle};
use crate::data::vocab::{index_articles, Vocabulary};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareCfg {
    pub max_title_len: usize,
    pub min_word_freq: usize,
    pub split_seed: u64,
}

impl Default for PrepareCfg {
    fn default() -> Self {
        Self {
            max_title_len: 30,
            min_word_freq: 1,
            split_seed: 42,
        }
    }
}

/// A fully prepared dataset: indexed articles, the original training
/// impressions, and the source validation impressions re-split 1:1 into
/// validation and test halves.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub store: ArticleStore,
    pub users: Interner,
    pub train: Vec<Impression>,
    pub val: Vec<Impression>,
    pub test: Vec<Impression>,
    pub stats: StatsReport,
}

/// Merge per-file article lists; later files win on duplicate ids, keeping
/// first-appearance order (the MIND train/dev news files overlap heavily).
pub fn merge_articles(lists: Vec<Vec<NewsArticle>>) -> Vec<NewsArticle> {
    let mut merged: Vec<NewsArticle> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for list in lists {
        for a in list {
            match index.get(&a.news_id) {
                Some(&i) => merged[i] = a,
                None => {
                    index.insert(a.news_id.clone(), merged.len());
                    merged.push(a);
                }
            }
        }
    }
    merged
}

pub fn prepare_dataset<N, T, D>(
    news_readers: Vec<N>,
    train_behaviors: T,
    dev_behaviors: D,
    cfg: &PrepareCfg,
) -> Result<DatasetBundle>
where
    N: BufRead,
    T: BufRead,
    D: BufRead,
{
    let mut article_lists = Vec::new();
    for r in news_readers {
        article_lists.push(parse_news(r)?);
    }
    let mut articles = merge_articles(article_lists);
    if articles.is_empty() {
        return Err(Error::Data("news corpus is empty".into()));
    }
    let vocab = Vocabulary::build(&articles, cfg.min_word_freq);
    index_articles(&mut articles, &vocab, cfg.max_title_len);
    let store = ArticleStore::build(&articles, vocab, cfg.max_title_len)?;

    let mut users = Interner::new();
    let train = parse_behaviors(train_behaviors, &store.news, &mut users)?;
    let dev = parse_behaviors(dev_behaviors, &store.news, &mut users)?;

    let all: Vec<Impression> = train.iter().chain(dev.iter()).cloned().collect();
    let stats = dataset_stats(&articles, &all);
    drop(all);

    let (val, test) = split_validation(dev, cfg.split_seed)?;
    Ok(DatasetBundle {
        store,
        users,
        train,
        val,
        test,
        stats,
    })
}

/// Load from a directory in either layout:
/// - MIND style: `train/news.tsv`, `train/behaviors.tsv`, `dev/news.tsv`,
///   `dev/behaviors.tsv`
/// - flat style: `news.tsv`, `behaviors_train.tsv`, `behaviors_dev.tsv`
pub fn prepare_from_dir(dir: &Path, cfg: &PrepareCfg) -> Result<DatasetBundle> {
    let open = |p: std::path::PathBuf| -> Result<std::io::BufReader<std::fs::File>> {
        std::fs::File::open(&p)
            .map(std::io::BufReader::new)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", p.display())))
    };
    if dir.join("train").join("behaviors.tsv").exists() {
        let news = vec![
            open(dir.join("train").join("news.tsv"))?,
            open(dir.join("dev").join("news.tsv"))?,
        ];
        prepare_dataset(
            news,
            open(dir.join("train").join("behaviors.tsv"))?,
            open(dir.join("dev").join("behaviors.tsv"))?,
            cfg,
        )
    } else {
        prepare_dataset(
            vec![open(dir.join("news.tsv"))?],
            open(dir.join("behaviors_train.tsv"))?,
            open(dir.join("behaviors_dev.tsv"))?,
            cfg,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate, write_to_dir, SynthCfg};
    use std::io::Cursor;

    fn synth_bundle() -> DatasetBundle {
        let corpus = generate(&SynthCfg::default());
        prepare_dataset(
            vec![Cursor::new(corpus.news_tsv.into_bytes())],
            Cursor::new(corpus.train_tsv.into_bytes()),
            Cursor::new(corpus.dev_tsv.into_bytes()),
            &PrepareCfg::default(),
        )
        .unwrap()
    }

    #[test]
    fn bundle_splits_dev_and_reports_stats() {
        let cfg = SynthCfg::default();
        let b = synth_bundle();
        assert_eq!(b.train.len(), cfg.n_train_impressions);
        assert_eq!(b.val.len() + b.test.len(), cfg.n_dev_impressions);
        assert!((b.val.len() as i64 - b.test.len() as i64).abs() <= 1);
        assert_eq!(b.stats.n_news, cfg.n_topics * cfg.articles_per_topic);
        assert_eq!(
            b.stats.n_samples,
            (cfg.n_train_impressions + cfg.n_dev_impressions) * cfg.group_size
        );
        assert_eq!(
            b.stats.n_interactions,
            cfg.n_train_impressions + cfg.n_dev_impressions
        );
    }

    #[test]
    fn title_tokens_are_indexed_and_padded() {
        let b = synth_bundle();
        let cfg = PrepareCfg::default();
        for id in b.store.ids().skip(1) {
            assert_eq!(b.store.title_ids(id).len(), cfg.max_title_len);
            assert!(b.store.title_len(id) > 0);
            for &t in b.store.title_prefix(id) {
                assert!((t as usize) < b.store.vocab.len());
                assert!(t >= 2, "real words never map to pad/unk here");
            }
        }
    }

    #[test]
    fn directory_layouts_load() {
        let tmp = tempfile::tempdir().unwrap();
        let corpus = generate(&SynthCfg::default());
        write_to_dir(&corpus, tmp.path()).unwrap();
        let flat = prepare_from_dir(tmp.path(), &PrepareCfg::default()).unwrap();
        assert_eq!(flat.train.len(), SynthCfg::default().n_train_impressions);

        let mind = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(mind.path().join("train")).unwrap();
        std::fs::create_dir_all(mind.path().join("dev")).unwrap();
        std::fs::write(mind.path().join("train/news.tsv"), &corpus.news_tsv).unwrap();
        std::fs::write(mind.path().join("dev/news.tsv"), &corpus.news_tsv).unwrap();
        std::fs::write(mind.path().join("train/behaviors.tsv"), &corpus.train_tsv).unwrap();
        std::fs::write(mind.path().join("dev/behaviors.tsv"), &corpus.dev_tsv).unwrap();
        let layered = prepare_from_dir(mind.path(), &PrepareCfg::default()).unwrap();
        assert_eq!(layered.stats, flat.stats);
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let tmp = tempfile::tempdir().unwrap();
        let err = prepare_from_dir(tmp.path(), &PrepareCfg::default()).unwrap_err();
        assert!(err.to_string().contains("news.tsv"));
    }
}
