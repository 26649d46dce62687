//! Accuracy, group fairness (DPR, CDD, EOD, AOD, PPD), individual fairness
//! (Consistency, Theil index) and counterfactual flip-invariance.
//!
//! `Accept` is the favorable outcome throughout: selection rate is
//! P(pred Accept), TPR is P(pred Accept | true Accept), FPR is
//! P(pred Accept | true Reject) and PPV is P(true Accept | pred Accept).
//! Multi-valued attributes reduce to the lowest and highest group.

mod counterfactual;
mod group;
mod individual;
mod metric;
mod report;

pub use counterfactual::{counterfactual, CounterfactualProbe};
pub use group::{aod, cdd, dpr, eod, extremes, group_stats, ppd, Cdd, GroupRates, GroupReduction, GroupStats};
pub use individual::{accuracy, consistency, consistency_from_neighbors, nearest_neighbors, theil};
pub use metric::{Direction, Metric, MetricKey, MetricValue};
pub use report::{
    report, AttributeMetrics, Evaluator, FairnessReport, ReportConfig, ReportMetadata,
    REPORT_SCHEMA_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("{metric} needs at least 2 groups, found {found}")]
    TooFewGroups { metric: &'static str, found: usize },
    #[error("{metric} is undefined{}: {reason}", .group.as_deref().map(|g| format!(" for group `{g}`")).unwrap_or_default())]
    Undefined {
        metric: &'static str,
        group: Option<String>,
        reason: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Model(#[from] crate::gbdt::GbdtError),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

pub(crate) fn undefined(metric: &'static str, group: Option<&str>, reason: &str) -> MetricError {
    MetricError::Undefined {
        metric,
        group: group.map(str::to_string),
        reason: reason.to_string(),
    }
}
