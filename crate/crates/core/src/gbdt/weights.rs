use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{GbdtError, Result};
use crate::data::EncodedMatrix;
use crate::Outcome;

/// Normalized, non-negative weight per feature group (sums to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureWeights(BTreeMap<String, f64>);

impl FeatureWeights {
    /// Equal weight for every group.
    pub fn uniform<S: AsRef<str>>(groups: &[S]) -> Self {
        let w = 1.0 / groups.len().max(1) as f64;
        Self(groups.iter().map(|g| (g.as_ref().to_string(), w)).collect())
    }

    pub fn get(&self, group: &str) -> Option<f64> {
        self.0.get(group).copied()
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Divides every entry by the total so the weights sum to one.
pub fn normalize_weights(raw: &BTreeMap<String, f64>) -> Result<FeatureWeights> {
    if let Some((k, v)) = raw.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(GbdtError::InvalidWeights(format!(
            "weight for `{k}` is {v}; weights must be finite and non-negative"
        )));
    }
    let total: f64 = raw.values().sum();
    if total <= 0.0 {
        return Err(GbdtError::InvalidWeights("all weights are zero".into()));
    }
    Ok(FeatureWeights(
        raw.iter().map(|(k, v)| (k.clone(), v / total)).collect(),
    ))
}

/// Non-negative per-row training weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceWeights(Vec<f64>);

impl InstanceWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(GbdtError::InvalidWeights(
                "instance weights must be finite and non-negative".into(),
            ));
        }
        if !w.iter().any(|x| *x > 0.0) {
            return Err(GbdtError::InvalidWeights("all instance weights are zero".into()));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Class-balancing weights for the original rows and the feedback rows of a
/// training matrix.
///
/// Inside each block every present class gets the same total weight (rows of
/// a class share it equally) and the block total equals its row count. The
/// feedback block is then rescaled to `alpha` times the original block total.
pub fn balance_instance_weights(
    train: &EncodedMatrix,
    feedback_block: &[usize],
    alpha: f64,
) -> Result<InstanceWeights> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(GbdtError::InvalidWeights(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let n = train.n_rows();
    let labels: Vec<Outcome> = train
        .targets()
        .iter()
        .enumerate()
        .map(|(i, t)| t.ok_or_else(|| GbdtError::Unlabeled(train.ids()[i].clone())))
        .collect::<Result<_>>()?;
    let feedback: BTreeSet<usize> = feedback_block.iter().copied().collect();
    if let Some(&bad) = feedback.iter().find(|&&r| r >= n) {
        return Err(GbdtError::InvalidWeights(format!(
            "feedback row {bad} out of range for {n} rows"
        )));
    }
    let original: Vec<usize> = (0..n).filter(|r| !feedback.contains(r)).collect();
    if original.is_empty() {
        return Err(GbdtError::EmptyTraining);
    }
    let feedback: Vec<usize> = feedback.into_iter().collect();

    let mut w = vec![0.0; n];
    let original_total = balance_block(&original, &labels, &mut w);
    if !feedback.is_empty() {
        let fb_total = balance_block(&feedback, &labels, &mut w);
        let scale = alpha * original_total / fb_total;
        for &r in &feedback {
            w[r] *= scale;
        }
    }
    InstanceWeights::new(w)
}

fn balance_block(rows: &[usize], labels: &[Outcome], w: &mut [f64]) -> f64 {
    let mut counts = [0usize; 2];
    for &r in rows {
        counts[labels[r] as usize] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count() as f64;
    let n = rows.len() as f64;
    for &r in rows {
        w[r] = n / (present * counts[labels[r] as usize] as f64);
    }
    n
}
