//! Feedback logs, integration policies, retraining in global and
//! personalized modes, CMA series and baseline deltas.

mod feedback;
mod policy;
mod retrain;
mod series;

pub use feedback::{
    by_participant, chronological, parse_jsonl, read_jsonl, to_jsonl, write_jsonl, FeedbackInstance,
    FeedbackLabel, FeedbackLog, FeedbackMapping, LineError, TimestampUnit,
};
pub use policy::{
    effective_rows, judgement_target, merge_weights, FlipReference, IntegrationPolicy, IntegrationWarning,
    PolicyKind, ResolvedFeedback,
};
pub use retrain::{
    retrain_global, retrain_personalized, Augmented, FeedbackChain, PersonalizedRun, RetrainContext,
    RetrainOutcome, StepState, TrainingSet,
};
pub use series::{
    cma_from_scratch, deltas_with, percent_change, report_deltas, Change, Cma, MetricDelta, MetricSeries,
    Series, SeriesPoint,
};

#[derive(Debug, thiserror::Error)]
pub enum IntegrationError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("feedback mapping: {0}")]
    Mapping(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("invalid feedback on `{application_id}`: {reason}")]
    InvalidFeedback { application_id: String, reason: String },
    #[error("application `{0}` is not in the application pool")]
    UnknownApplication(String),
    #[error("no feedback to integrate")]
    EmptyFeedback,
    #[error("personalized run mixes participants `{0}` and `{1}`")]
    MixedParticipants(String, String),
    #[error("application `{0}` has no ground-truth label to flip")]
    Unlabeled(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Gbdt(#[from] crate::gbdt::GbdtError),
    #[error(transparent)]
    Metric(#[from] crate::fairness::MetricError),
}

pub type Result<T, E = IntegrationError> = std::result::Result<T, E>;
