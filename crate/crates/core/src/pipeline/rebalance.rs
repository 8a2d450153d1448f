use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Groups items by class index, keeping input order within each class.
pub fn group_by_class<T: Clone>(items: &[T], class_of: impl Fn(&T) -> usize, num_classes: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new(); num_classes];
    for it in items {
        out[class_of(it)].push(it.clone());
    }
    out
}

/// Duplicates items of minority classes, drawn uniformly with replacement
/// from the same class, until every class matches the largest one.
pub fn oversample<T: Clone>(by_class: &[Vec<T>], rng: &mut Rng) -> Result<Vec<Vec<T>>> {
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Empty(format!("class {c} has no items to oversample")));
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    Ok(by_class
        .iter()
        .map(|members| {
            let mut out = members.clone();
            while out.len() < target {
                out.push(members[rng.gen_range(0..members.len())].clone());
            }
            out
        })
        .collect())
}

/// Keeps `round(ratio · n)` items per class, uniformly without replacement,
/// in their original order.
pub fn decimate_train<T: Clone>(by_class: &[Vec<T>], ratio: f64, rng: &mut Rng) -> Result<Vec<Vec<T>>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("decimation ratio must lie in (0, 1], got {ratio}")));
    }
    by_class
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let keep = (ratio * members.len() as f64).round() as usize;
            if keep == 0 {
                return Err(Error::Insufficient(format!(
                    "ratio {ratio} leaves class {c} ({} items) empty",
                    members.len()
                )));
            }
            let mut idx = sample(rng, members.len(), keep).into_vec();
            idx.sort_unstable();
            Ok(idx.into_iter().map(|i| members[i].clone()).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    fn classes(counts: &[usize]) -> Vec<Vec<(usize, usize)>> {
        counts.iter().enumerate().map(|(c, &n)| (0..n).map(|i| (c, i)).collect()).collect()
    }

    #[test]
    fn balances_to_max() {
        let out = oversample(&classes(&[10, 4]), &mut seed::rng(0)).unwrap();
        assert_eq!(out[0].len(), 10);
        assert_eq!(out[1].len(), 10);
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let input = classes(&[6, 6]);
        assert_eq!(oversample(&input, &mut seed::rng(0)).unwrap(), input);
    }

    #[test]
    fn duplicates_come_from_the_same_class() {
        let out = oversample(&classes(&[3, 1]), &mut seed::rng(5)).unwrap();
        assert_eq!(out[1], vec![(1, 0); 3]);
    }

    #[test]
    fn empty_class_fails() {
        assert!(oversample(&classes(&[3, 0]), &mut seed::rng(0)).is_err());
    }

    #[test]
    fn decimation_examples() {
        let out = decimate_train(&classes(&[16, 8]), 0.25, &mut seed::rng(1)).unwrap();
        assert_eq!((out[0].len(), out[1].len()), (4, 2));
        let input = classes(&[16, 8]);
        assert_eq!(decimate_train(&input, 1.0, &mut seed::rng(1)).unwrap(), input);
        assert_eq!(decimate_train(&classes(&[16]), 1.0 / 16.0, &mut seed::rng(1)).unwrap()[0].len(), 1);
        assert!(decimate_train(&classes(&[16, 3]), 1.0 / 16.0, &mut seed::rng(1)).is_err());
    }

    proptest! {
        #[test]
        fn oversampling_balances_and_retains(counts in proptest::collection::vec(1usize..40, 1..8), s in any::<u64>()) {
            let input = classes(&counts);
            let out = oversample(&input, &mut seed::rng(s)).unwrap();
            let max = *counts.iter().max().unwrap();
            for (c, members) in out.iter().enumerate() {
                prop_assert_eq!(members.len(), max);
                prop_assert_eq!(&members[..counts[c]], &input[c][..]);
                prop_assert!(members.iter().all(|m| m.0 == c));
            }
        }

        #[test]
        fn decimation_preserves_proportions(counts in proptest::collection::vec(16usize..80, 1..6), p in 0u32..5, s in any::<u64>()) {
            let ratio = 1.0 / f64::from(1u32 << p);
            let out = decimate_train(&classes(&counts), ratio, &mut seed::rng(s)).unwrap();
            for (c, members) in out.iter().enumerate() {
                let expect = ratio * counts[c] as f64;
                prop_assert!((members.len() as f64 - expect).abs() <= 1.0);
                let mut d = members.clone();
                d.dedup();
                prop_assert_eq!(d.len(), members.len());
            }
        }
    }
}
