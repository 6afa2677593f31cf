use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step {t} out of range 0..={max}")]
    StepOutOfRange { t: usize, max: usize },

    #[error("degenerate step {t}: alpha at this step equals 1")]
    DegenerateStep { t: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite loss {loss} at step {step} (diffusion step {t})")]
    NonFiniteLoss { step: usize, t: usize, loss: f64 },

    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: row {row} has {got} columns, expected {expected}")]
    DimensionInconsistency {
        path: PathBuf,
        row: usize,
        expected: usize,
        got: usize,
    },

    #[error("unsupported checkpoint format_version {found} (expected {expected})")]
    VersionMismatch { found: i64, expected: i64 },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::SchemaViolation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
