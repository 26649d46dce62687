use serde::{Deserialize, Serialize};

use super::{sigmoid, FeatureWeights, GbdtError, GbdtParams, Result};
use crate::Outcome;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A regression tree node. Rows with `x[column] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        column: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        weight: f64,
    },
}

impl Node {
    pub fn eval(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    column,
                    threshold,
                    left,
                    right,
                } => node = if row[*column] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Columns used by any split in this subtree.
    pub fn visit_splits(&self, f: &mut impl FnMut(usize, f64)) {
        if let Node::Split {
            column,
            threshold,
            left,
            right,
        } = self
        {
            f(*column, *threshold);
            left.visit_splits(f);
            right.visit_splits(f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Probability of target 1, i.e. of `Reject`.
    pub probability: f64,
    pub label: Outcome,
    /// `max(p, 1 - p)`.
    pub confidence: f64,
}

impl Prediction {
    pub fn from_probability(p: f64) -> Self {
        Self {
            probability: p,
            label: if p >= 0.5 { Outcome::Reject } else { Outcome::Accept },
            confidence: p.max(1.0 - p),
        }
    }
}

/// Immutable snapshot of a trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    format_version: u32,
    n_columns: usize,
    base_score: f64,
    trees: Vec<Node>,
    params: GbdtParams,
    feature_weights: FeatureWeights,
    fingerprint: String,
}

impl Model {
    pub(crate) fn new(
        n_columns: usize,
        base_score: f64,
        trees: Vec<Node>,
        params: GbdtParams,
        feature_weights: FeatureWeights,
        fingerprint: String,
    ) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            n_columns,
            base_score,
            trees,
            params,
            feature_weights,
            fingerprint,
        }
    }

    /// A tree-less model predicting `sigmoid(base_score)` everywhere.
    pub fn constant(n_columns: usize, base_score: f64) -> Self {
        Self::from_trees(n_columns, base_score, Vec::new())
    }

    /// A model assembled from explicit trees (mainly for tests and audits).
    pub fn from_trees(n_columns: usize, base_score: f64, trees: Vec<Node>) -> Self {
        let fingerprint = format!("manual:{}", trees.len());
        Self::new(
            n_columns,
            base_score,
            trees,
            GbdtParams::default(),
            FeatureWeights::uniform::<&str>(&[]),
            fingerprint,
        )
    }

    pub fn n_columns(&self) -> usize {
        self.n_columns
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[Node] {
        &self.trees
    }

    pub fn params(&self) -> &GbdtParams {
        &self.params
    }

    pub fn feature_weights(&self) -> &FeatureWeights {
        &self.feature_weights
    }

    /// Hash of the training inputs (active rows, targets, weights, params).
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_columns {
            return Err(GbdtError::Dimension {
                expected: self.n_columns,
                found: row.len(),
            });
        }
        Ok(self.margin_unchecked(row))
    }

    pub(crate) fn margin_unchecked(&self, row: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.eval(row))
    }

    pub fn predict(&self, row: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_probability(sigmoid(self.margin(row)?)))
    }

    /// Predictions for every row of a column-major matrix.
    pub fn predict_matrix(&self, m: &crate::data::EncodedMatrix) -> Result<Vec<Prediction>> {
        if m.n_cols() != self.n_columns {
            return Err(GbdtError::Dimension {
                expected: self.n_columns,
                found: m.n_cols(),
            });
        }
        let mut row = vec![0.0; m.n_cols()];
        Ok((0..m.n_rows())
            .map(|r| {
                for (c, x) in row.iter_mut().enumerate() {
                    *x = m.get(r, c);
                }
                Prediction::from_probability(sigmoid(self.margin_unchecked(&row)))
            })
            .collect())
    }

    /// Columns that appear in at least one split.
    pub fn split_columns(&self) -> std::collections::BTreeSet<usize> {
        let mut out = std::collections::BTreeSet::new();
        for t in &self.trees {
            t.visit_splits(&mut |c, _| {
                out.insert(c);
            });
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Model = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(GbdtError::FormatVersion(m.format_version));
        }
        Ok(m)
    }
}
