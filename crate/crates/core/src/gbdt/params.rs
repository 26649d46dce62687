use serde::{Deserialize, Serialize};

use super::{GbdtError, Result};

/// How feature weights influence training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureWeightMode {
    /// Per-tree column sampling with probability proportional to the weight.
    #[default]
    Sampling,
    /// Uniform column sampling; each candidate split gain is multiplied by
    /// `weight * n_groups` (1 for uniform weights).
    GainScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, try_from = "RawParams")]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub colsample_bytree: f64,
    pub min_child_weight: f64,
    pub seed: u64,
    pub feature_weight_mode: FeatureWeightMode,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 4,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            colsample_bytree: 0.8,
            min_child_weight: 1.0,
            seed: 0,
            feature_weight_mode: FeatureWeightMode::Sampling,
        }
    }
}

#[derive(Deserialize)]
#[serde(default)]
struct RawParams {
    n_trees: usize,
    max_depth: usize,
    learning_rate: f64,
    lambda: f64,
    gamma: f64,
    colsample_bytree: f64,
    min_child_weight: f64,
    seed: u64,
    feature_weight_mode: FeatureWeightMode,
}

impl Default for RawParams {
    fn default() -> Self {
        let d = GbdtParams::default();
        Self {
            n_trees: d.n_trees,
            max_depth: d.max_depth,
            learning_rate: d.learning_rate,
            lambda: d.lambda,
            gamma: d.gamma,
            colsample_bytree: d.colsample_bytree,
            min_child_weight: d.min_child_weight,
            seed: d.seed,
            feature_weight_mode: d.feature_weight_mode,
        }
    }
}

impl TryFrom<RawParams> for GbdtParams {
    type Error = GbdtError;

    fn try_from(r: RawParams) -> Result<Self> {
        GbdtParams {
            n_trees: r.n_trees,
            max_depth: r.max_depth,
            learning_rate: r.learning_rate,
            lambda: r.lambda,
            gamma: r.gamma,
            colsample_bytree: r.colsample_bytree,
            min_child_weight: r.min_child_weight,
            seed: r.seed,
            feature_weight_mode: r.feature_weight_mode,
        }
        .validated()
    }
}

impl GbdtParams {
    /// Checks every bound; used by the deserializer and by `train`.
    pub fn validated(self) -> Result<Self> {
        fn bad(name: &'static str, reason: &str) -> GbdtError {
            GbdtError::InvalidParam {
                name,
                reason: reason.to_string(),
            }
        }
        if self.n_trees < 1 {
            return Err(bad("n_trees", "must be at least 1"));
        }
        if self.max_depth < 1 {
            return Err(bad("max_depth", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(bad("learning_rate", "must be in (0, 1]"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(bad("lambda", "must be finite and >= 0"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(bad("gamma", "must be finite and >= 0"));
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return Err(bad("colsample_bytree", "must be in (0, 1]"));
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return Err(bad("min_child_weight", "must be finite and >= 0"));
        }
        Ok(self)
    }
}
