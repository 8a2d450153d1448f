use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// One cross-validation fold over partition indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold assignment over items with class `labels[i]`.
///
/// Each class is shuffled and dealt round-robin over the folds; the dealing
/// start rotates with the running item count so fold sizes stay balanced
/// across classes.
pub fn split_kfold(labels: &[usize], folds: usize, rng: &mut Rng) -> Result<Vec<FoldSplit>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut assignment = vec![0usize; labels.len()];
    let mut dealt = 0usize;
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < folds {
            return Err(Error::Insufficient(format!(
                "class {class} has {} partitions, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(rng);
        for (j, &item) in members.iter().enumerate() {
            assignment[item] = (dealt + j) % folds;
        }
        dealt += members.len();
    }
    Ok((0..folds)
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| assignment[i] == fold);
            FoldSplit { fold, train, test }
        })
        .collect())
}

/// Audit table: `partition_id,class,fold,role`, one row per partition per fold.
pub fn write_fold_manifest(path: &Path, ids: &[String], classes: &[String], splits: &[FoldSplit]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["partition_id", "class", "fold", "role"])?;
    for s in splits {
        for (role, set) in [("train", &s.train), ("test", &s.test)] {
            for &i in set.iter() {
                w.write_record([ids[i].as_str(), classes[i].as_str(), &s.fold.to_string(), role])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;

    #[test]
    fn even_split_of_ten() {
        let splits = split_kfold(&[0; 10], 5, &mut seed::rng(1)).unwrap();
        assert!(splits.iter().all(|s| s.test.len() == 2 && s.train.len() == 8));
    }

    #[test]
    fn pigeonhole_stratification() {
        let labels: Vec<usize> = [vec![0; 7], vec![1; 5]].concat();
        let splits = split_kfold(&labels, 5, &mut seed::rng(3)).unwrap();
        for s in &splits {
            let a = s.test.iter().filter(|&&i| labels[i] == 0).count();
            let b = s.test.iter().filter(|&&i| labels[i] == 1).count();
            assert!(a >= 1);
            assert_eq!(b, 1);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let a = split_kfold(&labels, 5, &mut seed::rng(9)).unwrap();
        let b = split_kfold(&labels, 5, &mut seed::rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_items_in_a_class() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1];
        assert!(matches!(split_kfold(&labels, 5, &mut seed::rng(0)), Err(Error::Insufficient(_))));
    }

    proptest! {
        #[test]
        fn folds_partition_the_items(
            counts in proptest::collection::vec(5usize..30, 1..6),
            k in 2usize..6,
            s in any::<u64>(),
        ) {
            let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
            let splits = split_kfold(&labels, k, &mut seed::rng(s)).unwrap();
            let mut seen = vec![0usize; labels.len()];
            for sp in &splits {
                for &i in &sp.test {
                    seen[i] += 1;
                    prop_assert!(!sp.train.contains(&i));
                }
                prop_assert_eq!(sp.train.len() + sp.test.len(), labels.len());
                for c in 0..counts.len() {
                    prop_assert!(sp.train.iter().any(|&i| labels[i] == c));
                    let in_test = sp.test.iter().filter(|&&i| labels[i] == c).count();
                    prop_assert!(in_test == counts[c] / k || in_test == counts[c] / k + 1);
                }
            }
            prop_assert!(seen.iter().all(|&n| n == 1));
        }
    }
}
