//! Validation re-split: the source validation impressions are halved 1:1
//! into new validation and test sets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::types::Impression;
use crate::{Error, Result};

/// Split impressions 1:1 at impression granularity. Membership is chosen by
/// a seeded shuffle; each half preserves the input order. The first half
/// (validation) takes the extra element when the count is odd.
pub fn split_validation(
    impressions: Vec<Impression>,
    seed: u64,
) -> Result<(Vec<Impression>, Vec<Impression>)> {
    if impressions.is_empty() {
        return Err(Error::Data("cannot split an empty impression list".into()));
    }
    let n = impressions.len();
    let n_val = n.div_ceil(2);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut in_val = vec![false; n];
    for &i in &indices[..n_val] {
        in_val[i] = true;
    }

    let mut val = Vec::with_capacity(n_val);
    let mut test = Vec::with_capacity(n - n_val);
    for (imp, &v) in impressions.into_iter().zip(&in_val) {
        if v {
            val.push(imp);
        } else {
            test.push(imp);
        }
    }
    Ok((val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::{NewsId, UserId};
    use std::collections::HashSet;

    fn imps(n: usize) -> Vec<Impression> {
        (0..n)
            .map(|i| Impression {
                impression_id: i.to_string(),
                user_id: UserId(i as u32),
                timestamp: String::new(),
                history: vec![],
                candidates: vec![(NewsId(1), 1)],
            })
            .collect()
    }

    #[test]
    fn splits_even_input_in_half() {
        let (val, test) = split_validation(imps(10), 42).unwrap();
        assert_eq!(val.len(), 5);
        assert_eq!(test.len(), 5);
    }

    #[test]
    fn odd_input_gives_validation_the_extra() {
        let (val, test) = split_validation(imps(11), 42).unwrap();
        assert_eq!(val.len(), 6);
        assert_eq!(test.len(), 5);
        let val_ids: HashSet<_> = val.iter().map(|i| i.impression_id.clone()).collect();
        let test_ids: HashSet<_> = test.iter().map(|i| i.impression_id.clone()).collect();
        assert!(val_ids.is_disjoint(&test_ids));
        assert_eq!(val_ids.len() + test_ids.len(), 11);
    }

    #[test]
    fn same_seed_reproduces_the_split() {
        let (v1, t1) = split_validation(imps(37), 7).unwrap();
        let (v2, t2) = split_validation(imps(37), 7).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn different_seeds_usually_differ() {
        let (v1, _) = split_validation(imps(64), 1).unwrap();
        let (v2, _) = split_validation(imps(64), 2).unwrap();
        assert_ne!(v1, v2);
    }

    #[test]
    fn halves_preserve_input_order() {
        let (val, test) = split_validation(imps(21), 3).unwrap();
        for half in [&val, &test] {
            let ids: Vec<usize> = half.iter().map(|i| i.impression_id.parse().unwrap()).collect();
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            assert_eq!(ids, sorted);
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(split_validation(Vec::new(), 1).is_err());
    }
}
