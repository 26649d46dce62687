//! Second-order gradient-boosted decision trees for binary classification.
//!
//! Training follows the usual Newton boosting recipe on the logistic loss:
//! per-instance gradients `w (p - y)` and hessians `w p (1 - p)`, exact greedy
//! split search over sorted unique values, and L2-regularized leaf weights.
//! Feature weights steer per-tree column sampling (or, optionally, scale
//! split gains).

mod model;
mod params;
mod train;
mod weights;

pub use model::{Model, Node, Prediction, MODEL_FORMAT_VERSION};
pub use params::{FeatureWeightMode, GbdtParams};
pub use train::{
    logistic_grad_hess, sigmoid, train, train_with_trace, weighted_logloss, TrainTrace,
    TrainWarning,
};
pub use weights::{balance_instance_weights, normalize_weights, FeatureWeights, InstanceWeights};

#[derive(Debug, thiserror::Error)]
pub enum GbdtError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("training set is empty (or every instance weight is zero)")]
    EmptyTraining,
    #[error("row `{0}` has no target label")]
    Unlabeled(String),
    #[error("expected {expected} values, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("feature weights do not cover feature group `{0}`")]
    MissingFeatureWeight(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    FormatVersion(u32),
}

pub type Result<T, E = GbdtError> = std::result::Result<T, E>;
