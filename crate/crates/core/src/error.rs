use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("non-finite simulator state at step {step}")]
    NonFiniteState { step: usize },

    #[error("release below floor height (release x = {release_x})")]
    DegenerateRelease { release_x: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("generation timed out: acceptance rate {rate:.3e} after {candidates} candidates")]
    Timeout { rate: f64, candidates: u64 },

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("condition {0} m is outside the trained range")]
    ConditionOutOfRange(f64),

    #[error("degenerate covariance (smallest eigenvalue {0:e}); restart recommended")]
    DegenerateCovariance(f64),

    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
