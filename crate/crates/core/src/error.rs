use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum SscError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate Jacobi parameters (a={a}, b={b}, l={l})")]
    DegenerateJacobi { a: f64, b: f64, l: usize },

    #[error("negative edge weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },

    #[error("NaN similarity between items {0} and {1}")]
    NanSimilarity(usize, usize),

    #[error("graph too dense: cannot place {requested} replacement edges, only {available} free pairs")]
    TooDense { requested: usize, available: usize },

    #[error("{nodes} nodes exceeds the dense eigensolver cap of {cap}; use power iteration instead")]
    TooLargeForDense { nodes: usize, cap: usize },

    #[error("zero vector")]
    ZeroVector,

    #[error("non-finite loss {loss} at step {step}; lower the learning rate")]
    NonFiniteLoss { loss: f64, step: u64 },

    #[error("user {user} has no negative item after {attempts} attempts")]
    NegativeSamplingExhausted { user: usize, attempts: usize },

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SscError> = std::result::Result<T, E>;
