use rayon::prelude::*;

use super::{undefined, MetricError, Result};
use crate::data::EncodedMatrix;
use crate::Outcome;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(MetricError::Invalid(format!("misaligned inputs: {a} vs {b}")));
    }
    Ok(())
}

/// Fraction of correct labels, optionally weighted per instance.
pub fn accuracy(preds: &[Outcome], truth: &[Outcome], weights: Option<&[f64]>) -> Result<f64> {
    check_len(preds.len(), truth.len())?;
    if preds.is_empty() {
        return Err(MetricError::Invalid("empty evaluation set".into()));
    }
    let (hit, total) = match weights {
        None => {
            let hit = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
            (hit as f64, preds.len() as f64)
        }
        Some(w) => {
            check_len(preds.len(), w.len())?;
            preds.iter().zip(truth).zip(w).fold((0.0, 0.0), |(h, t), ((p, y), w)| {
                (if p == y { h + w } else { h }, t + w)
            })
        }
    };
    if total <= 0.0 {
        return Err(undefined("Accuracy", None, "total weight is zero"));
    }
    Ok(hit / total)
}

/// The `k` nearest rows of every row by Euclidean distance, self excluded.
/// Equal distances are ordered by row index.
pub fn nearest_neighbors(matrix: &EncodedMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = matrix.n_rows();
    if k == 0 || k >= n {
        return Err(MetricError::Invalid(format!("k must be in 1..{n}, got {k}")));
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|r| matrix.row(r)).collect();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &rows[i];
            let mut d: Vec<(f64, usize)> = rows
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, xj)| (xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
            d.sort_by(cmp);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// `1 - mean |y_i - mean_{j in kNN(i)} y_j|` over binary predictions.
pub fn consistency_from_neighbors(preds: &[Outcome], neighbors: &[Vec<usize>]) -> Result<f64> {
    check_len(preds.len(), neighbors.len())?;
    if preds.is_empty() {
        return Err(MetricError::Invalid("empty evaluation set".into()));
    }
    let y = |o: Outcome| if o.is_favorable() { 1.0 } else { 0.0 };
    let total: f64 = preds
        .iter()
        .zip(neighbors)
        .map(|(p, nb)| {
            let m = nb.iter().map(|&j| y(preds[j])).sum::<f64>() / nb.len() as f64;
            (y(*p) - m).abs()
        })
        .sum();
    Ok(1.0 - total / preds.len() as f64)
}

pub fn consistency(preds: &[Outcome], matrix: &EncodedMatrix, k: usize) -> Result<f64> {
    check_len(preds.len(), matrix.n_rows())?;
    consistency_from_neighbors(preds, &nearest_neighbors(matrix, k)?)
}

/// Theil index of benefits `b = pred - truth + 1` with `Accept = 1`.
pub fn theil(preds: &[Outcome], truth: &[Outcome]) -> Result<f64> {
    check_len(preds.len(), truth.len())?;
    if preds.is_empty() {
        return Err(MetricError::Invalid("empty evaluation set".into()));
    }
    let y = |o: &Outcome| if o.is_favorable() { 1.0 } else { 0.0 };
    let b: Vec<f64> = preds.iter().zip(truth).map(|(p, t)| y(p) - y(t) + 1.0).collect();
    theil_of_benefits(&b)
}

pub(crate) fn theil_of_benefits(b: &[f64]) -> Result<f64> {
    let mu = b.iter().sum::<f64>() / b.len() as f64;
    if mu == 0.0 {
        return Err(undefined("Theil", None, "mean benefit is zero"));
    }
    let s: f64 = b
        .iter()
        .map(|&x| {
            let r = x / mu;
            if r == 0.0 { 0.0 } else { r * r.ln() }
        })
        .sum();
    Ok((s / b.len() as f64).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Outcome::{Accept as A, Reject as R};

    fn line(xs: &[f64]) -> EncodedMatrix {
        EncodedMatrix::from_columns(vec![xs.to_vec()], vec![None; xs.len()])
    }

    #[test]
    fn identical_predictions_fully_consistent() {
        let m = line(&[0.0, 3.0, 1.0, 7.0]);
        assert_eq!(consistency(&[R, R, R, R], &m, 2).unwrap(), 1.0);
    }

    #[test]
    fn line_example() {
        let m = line(&[0.0, 1.0, 2.0]);
        let nb = nearest_neighbors(&m, 1).unwrap();
        assert_eq!(nb, vec![vec![1], vec![0], vec![1]]);
        let c = consistency(&[A, A, R], &m, 1).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn k_bounds() {
        let m = line(&[0.0, 1.0, 2.0]);
        assert!(consistency(&[A, A, R], &m, 3).is_err());
        assert!(consistency(&[A, A, R], &m, 0).is_err());
    }

    #[test]
    fn theil_examples() {
        assert_eq!(theil(&[A, R, A], &[A, R, A]).unwrap(), 0.0);
        let v = theil_of_benefits(&[1.0, 1.0, 2.0]).unwrap();
        let mu: f64 = 4.0 / 3.0;
        let oracle = (2.0 * (1.0 / mu) * (1.0 / mu).ln() + (2.0 / mu) * (2.0 / mu).ln()) / 3.0;
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 0.058892).abs() < 1e-6);
        // pred Accept on a true Reject gives benefit 2
        assert_eq!(theil(&[A, A, A], &[A, A, R]).unwrap(), v);
        assert!(theil(&[R, R], &[A, A]).is_err());
    }

    #[test]
    fn weighted_accuracy() {
        assert_eq!(accuracy(&[A, R], &[A, A], None).unwrap(), 0.5);
        assert_eq!(accuracy(&[A, R], &[A, A], Some(&[3.0, 1.0])).unwrap(), 0.75);
        assert!(accuracy(&[], &[], None).is_err());
    }
}
