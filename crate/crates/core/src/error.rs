use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {op}: argument {value} is outside the primitive's domain")]
    Domain { op: &'static str, value: f64 },

    #[error("operands belong to different tapes")]
    TapeMismatch,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("integration diverged at step {step}")]
    Diverged { step: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid specification: {0}")]
    BadSpec(String),

    #[error("all {restarts} restarts failed")]
    AllRestartsFailed { restarts: usize },

    #[error("parse error in {}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("date gap: missing {}", missing.join(", "))]
    DateGap { missing: Vec<String> },

    #[error("unknown state code {0:?}")]
    UnknownState(String),

    #[error("insufficient history: need {needed} days, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by malformed or missing input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DateGap { .. }
                | Error::UnknownState(_)
                | Error::InsufficientHistory { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
