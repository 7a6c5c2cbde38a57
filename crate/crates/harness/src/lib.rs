//! Shared-task harness: submission validation, track scoring, leaderboard
//! aggregation, a file-backed store, the HTTP service, and trial running for
//! hyperparameter search.

pub mod leaderboard;
pub mod score;
pub mod service;
pub mod store;
pub mod submission;
pub mod tune;

use std::path::Path;

pub use leaderboard::{build_leaderboard, Leaderboard};
pub use score::{MetricsConfig, ScoreReport, Scorer};
pub use store::Store;
pub use submission::{validate_submission, Submission, Track, ValidationReport};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Dataset(#[from] glossbench_core::dataset::DatasetError),
    #[error(transparent)]
    Metric(#[from] glossbench_core::metrics::MetricError),
    #[error("submission is invalid")]
    InvalidSubmission(Box<ValidationReport>),
    #[error("submission \"{0}\" already exists")]
    Duplicate(String),
    #[error("store: {0}")]
    Store(String),
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub(crate) fn read_file(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| HarnessError::io(path, e))
}
