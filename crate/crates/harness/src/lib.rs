//! Experiment driver: prepares splits, trains the baseline, replays feedback
//! logs in global or personalized mode, renders report tables and hosts the
//! session service.

use std::path::{Path, PathBuf};

pub mod commands;
pub mod config;
pub mod tables;

pub use config::{ExperimentConfig, Mode};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Data(#[from] fairloop_core::data::DataError),
    #[error(transparent)]
    Artifact(#[from] fairloop_core::artifacts::ArtifactError),
    #[error(transparent)]
    Integration(#[from] fairloop_core::integration::IntegrationError),
    #[error("report check failed: {0}")]
    Mismatch(String),
    #[error("service: {0}")]
    Serve(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
