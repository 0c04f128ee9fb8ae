use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Partition of `0..n` into `v` validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub v: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.v];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Random near-equal folds. With `stratify_on`, the ones are dealt round-robin
/// first and the zeros continue the rotation, so both fold sizes and per-fold
/// counts of ones differ by at most one.
pub fn make_folds<R: Rng>(
    n: usize,
    v: usize,
    stratify_on: Option<&[f64]>,
    rng: &mut R,
) -> Result<FoldAssignment> {
    if v < 2 || v > n {
        return Err(Error::BadFoldCount { n, v });
    }
    let order: Vec<usize> = match stratify_on {
        Some(s) => {
            if s.len() != n {
                return Err(Error::LengthMismatch {
                    what: "stratification vector".into(),
                    expected: n,
                    got: s.len(),
                });
            }
            let mut ones: Vec<usize> = (0..n).filter(|&i| s[i] == 1.0).collect();
            let mut rest: Vec<usize> = (0..n).filter(|&i| s[i] != 1.0).collect();
            ones.shuffle(rng);
            rest.shuffle(rng);
            ones.into_iter().chain(rest).collect()
        }
        None => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx
        }
    };
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % v;
    }
    Ok(FoldAssignment { v, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_folds() {
        let f = make_folds(10, 5, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
    }

    #[test]
    fn too_many_folds() {
        let err = make_folds(10, 11, None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert_eq!(err, Error::BadFoldCount { n: 10, v: 11 });
        assert!(make_folds(10, 1, None, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn stratified_counts() {
        let s: Vec<f64> = (0..100).map(|i| f64::from(i % 10 < 3)).collect();
        let f = make_folds(100, 10, Some(&s), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for fold in 0..10 {
            let val = f.validation(fold);
            assert_eq!(val.len(), 10);
            assert_eq!(val.iter().filter(|&&i| s[i] == 1.0).count(), 3);
        }
    }

    #[test]
    fn partition_covers_all_rows() {
        let f = make_folds(37, 4, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let mut all: Vec<usize> = (0..4).flat_map(|k| f.validation(k)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        let s = f.sizes();
        assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
    }
}
