use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Result};
use crate::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitMode {
    /// Class-balanced training set of `n_train` rows (majority class
    /// undersampled) plus a random hold-out of `n_holdout` remaining rows.
    UndersampleTrain { n_train: usize, n_holdout: usize },
    /// Stratified train and test samples that preserve the target
    /// proportions of the full dataset to within one row per class.
    Stratified { n_train: usize, n_test: usize },
}

/// Splits a labeled dataset into disjoint train and test sets.
///
/// Both outputs keep the source row order. The result is a pure function of
/// `(ds, mode, seed)`.
pub fn split(ds: &Dataset, mode: SplitMode, seed: u64) -> Result<(Dataset, Dataset)> {
    let labels = ds.labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[class_index(*l)].push(i);
    }
    for rows in by_class.iter_mut() {
        rows.shuffle(&mut rng);
    }

    let (mut train, mut test) = match mode {
        SplitMode::UndersampleTrain { n_train, n_holdout } => {
            let need_total = n_train + n_holdout;
            if need_total > ds.len() {
                return Err(DataError::InsufficientRows {
                    requested: need_total,
                    available: ds.len(),
                    detail: None,
                });
            }
            let quota = [n_train - n_train / 2, n_train / 2];
            for c in 0..2 {
                if by_class[c].len() < quota[c] {
                    return Err(DataError::InsufficientRows {
                        requested: quota[c],
                        available: by_class[c].len(),
                        detail: Some(format!(
                            "not enough {} rows for a balanced training set",
                            class_name(c)
                        )),
                    });
                }
            }
            let mut train = Vec::with_capacity(n_train);
            let mut rest = Vec::new();
            for c in 0..2 {
                train.extend_from_slice(&by_class[c][..quota[c]]);
                rest.extend_from_slice(&by_class[c][quota[c]..]);
            }
            rest.sort_unstable();
            rest.shuffle(&mut rng);
            rest.truncate(n_holdout);
            (train, rest)
        }
        SplitMode::Stratified { n_train, n_test } => {
            if n_train + n_test > ds.len() {
                return Err(DataError::InsufficientRows {
                    requested: n_train + n_test,
                    available: ds.len(),
                    detail: None,
                });
            }
            let counts = [by_class[0].len(), by_class[1].len()];
            let train_quota = allocate(n_train, counts);
            let remaining = [counts[0] - train_quota[0], counts[1] - train_quota[1]];
            let mut test_quota = allocate(n_test, counts);
            // the proportional test quota can exceed what the train draw left over by one row
            for c in 0..2 {
                if test_quota[c] > remaining[c] {
                    let excess = test_quota[c] - remaining[c];
                    test_quota[c] = remaining[c];
                    test_quota[1 - c] += excess;
                }
            }
            let mut train = Vec::with_capacity(n_train);
            let mut test = Vec::with_capacity(n_test);
            for c in 0..2 {
                train.extend_from_slice(&by_class[c][..train_quota[c]]);
                test.extend_from_slice(
                    &by_class[c][train_quota[c]..train_quota[c] + test_quota[c]],
                );
            }
            (train, test)
        }
    };
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

fn class_index(o: Outcome) -> usize {
    match o {
        Outcome::Accept => 0,
        Outcome::Reject => 1,
    }
}

fn class_name(c: usize) -> &'static str {
    if c == 0 {
        "Accept (target 0)"
    } else {
        "Reject (target 1)"
    }
}

/// Largest-remainder allocation of `n` rows proportional to `counts`.
fn allocate(n: usize, counts: [usize; 2]) -> [usize; 2] {
    let total = counts[0] + counts[1];
    if total == 0 {
        return [0, 0];
    }
    let exact = [
        n as f64 * counts[0] as f64 / total as f64,
        n as f64 * counts[1] as f64 / total as f64,
    ];
    let mut out = [exact[0].floor() as usize, exact[1].floor() as usize];
    let mut left = n - out[0] - out[1];
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for c in order {
        if left > 0 && out[c] < counts[c] {
            out[c] += 1;
            left -= 1;
        }
    }
    out
}
