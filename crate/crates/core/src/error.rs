use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside interval [{lower}, {upper}]")]
    OutOfRange { value: f64, lower: f64, upper: f64 },

    #[error("bin at layer {layer} is a leaf and has no children")]
    LeafBin { layer: usize },

    #[error("policy used before initialization")]
    NotInitialized,

    #[error("round {round} is not a batch boundary (next boundary at {next})")]
    NotAtBoundary { round: u64, next: u64 },

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("insufficient data: {have} observations, need at least {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("truncated sampler rejected {rejections} consecutive draws")]
    AcceptanceTooLow { rejections: usize },

    #[error("degenerate interval: all pilot projections equal {0}")]
    DegenerateInterval(f64),

    #[error("non-positive regret {value} at point {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("replicate {index} (seed {seed:#018x}) failed: {source}")]
    Replicate {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) => true,
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            _ => false,
        }
    }
}
