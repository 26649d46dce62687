//! Tabular application data: schema, CSV ingestion, imputation, encoding,
//! train/test splitting and numeric binning.

mod binning;
mod dataset;
mod encode;
mod impute;
mod schema;
mod split;

pub use binning::{bin, grouping_for, BinWarning, Binned, BinningRule, Grouping};
pub use dataset::{load_csv, Dataset, Value};
pub use encode::{
    encode, ColumnInfo, ColumnSource, EncodeWarning, EncodedMatrix, Encoder, GroupEncoding,
};
pub use impute::{impute, Imputer, UNKNOWN_CATEGORY};
pub(crate) use impute::median;
pub use schema::{FeatureKind, FeatureSpec, Schema, SchemaConfig};
pub use split::{split, SplitMode};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid json config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv header is missing columns: {}", .0.join(", "))]
    HeaderMismatch(Vec<String>),
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("duplicate feature name `{0}` in schema")]
    DuplicateFeature(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` is not numeric")]
    NotNumeric(String),
    #[error("value for `{0}` does not match the feature kind or is not finite")]
    KindMismatch(String),
    #[error("numeric feature `{0}` has no observed values; median is undefined")]
    AllMissing(String),
    #[error("row `{id}` is missing a value for `{feature}`")]
    MissingValue { id: String, feature: String },
    #[error("row `{0}` has no target label")]
    Unlabeled(String),
    #[error("row has {found} values, schema has {expected} features")]
    RowWidth { expected: usize, found: usize },
    #[error("requested {requested} rows but only {available} are available{}", .detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default())]
    InsufficientRows {
        requested: usize,
        available: usize,
        detail: Option<String>,
    },
    #[error("invalid binning rule for `{feature}`: {reason}")]
    InvalidBins { feature: String, reason: String },
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
