use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A held-out test set plus a partition of the remaining rows into folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SplitPlan {
    /// Training rows outside fold `f`.
    pub fn fold_complement(&self, f: usize) -> Vec<usize> {
        let mut rest: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        rest.sort_unstable();
        rest
    }
}

/// Shuffles `0..n`, holds out `round(test_fraction * n)` rows and partitions
/// the rest into `k` folds whose sizes differ by at most one. Index lists are
/// returned sorted.
pub fn make_split(n: usize, test_fraction: f64, k: usize, seed: u64) -> Result<SplitPlan> {
    if k == 0 {
        return Err(Error::BadShape("number of folds must be positive".into()));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::BadShape(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    if n < k + 1 {
        return Err(Error::TooFewInstances { needed: k + 1, found: n });
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n - n_test < k {
        return Err(Error::TooFewInstances { needed: n_test + k, found: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_indices = perm[..n_test].to_vec();
    let train = &perm[n_test..];
    let base = train.len() / k;
    let extra = train.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = train[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    let mut train_indices = train.to_vec();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(SplitPlan {
        train_indices,
        test_indices,
        folds,
        seed,
    })
}
