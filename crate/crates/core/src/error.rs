//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("frame kind mismatch: expected {expected} frame, got {got}")]
    FrameKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("stream alignment failed: {0}")]
    Alignment(String),

    #[error("too few pairs: got {got}, need at least {need}")]
    TooFewPairs { got: usize, need: usize },

    #[error("invalid layer sizes: {0}")]
    InvalidSizes(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("reference series has zero mean")]
    ZeroMeanReference,

    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. }
            | Error::Alignment(_)
            | Error::TooFewPairs { .. }
            | Error::FrameKind { .. }
            | Error::Io(_)
            | Error::Json(_) => 3,
            Error::DegenerateGeometry(_)
            | Error::Calibration(_)
            | Error::InvalidSizes(_)
            | Error::NonFinite(_)
            | Error::Training { .. }
            | Error::OutOfRange(_)
            | Error::ZeroMeanReference
            | Error::InvalidTimeStep(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
