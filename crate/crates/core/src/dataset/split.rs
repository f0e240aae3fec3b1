use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::LabelVector;
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Hold-out fraction and seed for a stratified train/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidConfig(format!(
                "test_fraction must lie in [0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Row indices of each class, in row order.
fn rows_by_class(y: &LabelVector) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); y.n_classes()];
    for (i, &l) in y.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Number of rows of a class with `count` samples sent to the test side.
/// Rounds half away from zero and always leaves one training row.
pub fn test_count(count: usize, test_fraction: f64) -> usize {
    let raw = (count as f64 * test_fraction).round() as usize;
    raw.min(count.saturating_sub(1))
}

/// Seeded per-class hold-out. Returns sorted `(train, test)` row indices.
pub fn stratified_split(y: &LabelVector, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let by_class = rows_by_class(y);
    if let Some((class, _)) = by_class.iter().enumerate().find(|(_, rows)| rows.is_empty()) {
        return Err(Error::ClassTooSmall {
            class,
            count: 0,
            required: 1,
        });
    }
    if by_class.len() < 2 {
        return Err(Error::InvalidData(
            "stratified split needs at least two classes".into(),
        ));
    }
    let mut train = Vec::with_capacity(y.len());
    let mut test = Vec::new();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        let n_test = test_count(rows.len(), spec.test_fraction);
        rows.shuffle(&mut rng_for(spec.seed, &[0x5e11, class as u64]));
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified partition of rows into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn from_parts(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
        }
        if let Some(&bad) = fold_of.iter().find(|&&f| f >= k) {
            return Err(Error::InvalidData(format!(
                "fold index {bad} out of range 0..{k}"
            )));
        }
        Ok(FoldAssignment { fold_of, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    /// Rows held out in fold `f`.
    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == f)
            .collect()
    }

    /// Rows outside fold `f`.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != f)
            .collect()
    }
}

/// Deals each class's shuffled rows round-robin over `k` folds. The dealing
/// position carries over between classes so total fold sizes stay balanced.
pub fn stratified_kfold(y: &LabelVector, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "k-fold needs k >= 2 so every row has out-of-fold data, got {k}"
        )));
    }
    let by_class = rows_by_class(y);
    for (class, rows) in by_class.iter().enumerate() {
        if rows.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                count: rows.len(),
                required: k,
            });
        }
    }
    let mut fold_of = vec![0; y.len()];
    let mut next = 0;
    for (class, mut rows) in by_class.into_iter().enumerate() {
        rows.shuffle(&mut rng_for(seed, &[0xf01d, class as u64]));
        for r in rows {
            fold_of[r] = next;
            next = (next + 1) % k;
        }
    }
    FoldAssignment::from_parts(fold_of, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blocks(counts: &[usize]) -> LabelVector {
        let labels = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        LabelVector::new(labels, counts.len()).unwrap()
    }

    fn per_class(y: &LabelVector, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; y.n_classes()];
        for &r in rows {
            counts[y.labels()[r]] += 1;
        }
        counts
    }

    #[test]
    fn seven_by_ten_holds_one_per_class() {
        let y = blocks(&[10; 7]);
        let (train, test) = stratified_split(
            &y,
            &SplitSpec {
                test_fraction: 0.1,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(test.len(), 7);
        assert_eq!(per_class(&y, &test), vec![1; 7]);
        assert_eq!(train.len(), 63);
    }

    #[test]
    fn zero_fraction_keeps_everything() {
        let y = blocks(&[4, 6]);
        let (train, test) = stratified_split(
            &y,
            &SplitSpec {
                test_fraction: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        assert!(test.is_empty());
        assert_eq!(train, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn uneven_counts_round_per_class() {
        let y = blocks(&[20, 10]);
        let (_, test) = stratified_split(
            &y,
            &SplitSpec {
                test_fraction: 0.1,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(per_class(&y, &test), vec![2, 1]);
    }

    #[test]
    fn split_rejects_bad_fraction_and_single_class() {
        let y = blocks(&[5, 5]);
        assert!(stratified_split(
            &y,
            &SplitSpec {
                test_fraction: 1.0,
                seed: 0
            }
        )
        .is_err());
        assert!(stratified_split(
            &y,
            &SplitSpec {
                test_fraction: -0.1,
                seed: 0
            }
        )
        .is_err());
        assert!(stratified_split(&blocks(&[8]), &SplitSpec::default()).is_err());
        assert!(matches!(
            stratified_split(&blocks(&[3, 0, 3]), &SplitSpec::default()),
            Err(Error::ClassTooSmall { class: 1, .. })
        ));
    }

    #[test]
    fn rounding_half_away_and_training_guard() {
        assert_eq!(test_count(5, 0.1), 1); // 0.5 rounds up
        assert_eq!(test_count(4, 0.1), 0);
        assert_eq!(test_count(1, 0.9), 0);
        assert_eq!(test_count(3, 0.9), 2);
    }

    #[test]
    fn kfold_exact_division() {
        let y = blocks(&[10; 7]);
        let folds = stratified_kfold(&y, 5, 11).unwrap();
        for f in 0..5 {
            assert_eq!(per_class(&y, &folds.test_rows(f)), vec![2; 7]);
        }
    }

    #[test]
    fn kfold_errors() {
        let y = blocks(&[10, 10]);
        assert!(matches!(stratified_kfold(&y, 1, 0), Err(Error::InvalidConfig(_))));
        let err = stratified_kfold(&blocks(&[3, 10]), 5, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::ClassTooSmall {
                class: 0,
                count: 3,
                required: 5
            }
        ));
        assert!(err.to_string().contains("class 0"));
    }

    proptest! {
        #[test]
        fn split_counts_and_partition(
            counts in prop::collection::vec(1usize..40, 2..6),
            frac in 0.0f64..0.95,
            seed in any::<u64>(),
        ) {
            let y = blocks(&counts);
            let (train, test) = stratified_split(&y, &SplitSpec { test_fraction: frac, seed }).unwrap();
            let got = per_class(&y, &test);
            for (c, &n) in counts.iter().enumerate() {
                prop_assert_eq!(got[c], test_count(n, frac));
            }
            let mut all: Vec<_> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        }

        #[test]
        fn kfold_is_stratified_and_deterministic(
            counts in prop::collection::vec(5usize..30, 1..6),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let y = blocks(&counts);
            let a = stratified_kfold(&y, k, seed).unwrap();
            let b = stratified_kfold(&y, k, seed).unwrap();
            prop_assert_eq!(&a, &b);
            let per_fold: Vec<Vec<usize>> = (0..k).map(|f| per_class(&y, &a.test_rows(f))).collect();
            for c in 0..counts.len() {
                let min = per_fold.iter().map(|v| v[c]).min().unwrap();
                let max = per_fold.iter().map(|v| v[c]).max().unwrap();
                prop_assert!(max - min <= 1);
            }
            let sizes: Vec<usize> = (0..k).map(|f| a.test_rows(f).len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
