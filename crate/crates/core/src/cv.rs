//! Fold assignment and small helpers shared by every cross-validated tuner.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::RidgeSpec;

/// Ridge matrix used inside the folds of a tuner.
#[derive(Debug, Clone, Copy)]
pub enum FoldRidge<'a> {
    /// The same `K` in every fold.
    Fixed(&'a RidgeSpec),
    /// Rerun the regime's ridge rule on each training fold, so `K` never
    /// sees the held-out rows.
    Reselect,
}

/// Random balanced fold labels in `0..folds`, deterministic in `seed`.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidInput(format!("need 2 <= folds <= n (folds = {folds}, n = {n})")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        labels[i] = pos % folds;
    }
    Ok(labels)
}

/// `(train, test)` row indices for fold `f`.
pub fn split_fold(labels: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::with_capacity(labels.len());
    let mut test = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == f {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Index of the smallest value; ties go to the earliest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// `{0, step, 2 step, ..., 1}`.
pub fn unit_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(|i| i as f64 / n as f64).collect()
}
