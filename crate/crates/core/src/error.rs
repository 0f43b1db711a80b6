use thiserror::Error;

/// Errors raised by the discovery library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    Empty,

    #[error("non-uniform grid in curve '{curve}': {detail}")]
    NonUniformGrid { curve: String, detail: String },

    #[error("dimension mismatch: expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("window [{start}, {start}+{len}) out of range for curve of {n_points} points")]
    WindowOutOfRange {
        start: i64,
        len: usize,
        n_points: usize,
    },

    #[error("window inadmissible: {valid} jointly valid points, {required} required")]
    Inadmissible { valid: usize, required: usize },

    #[error("no admissible window of length {len} in curve '{curve}'")]
    NoAdmissibleWindow { curve: String, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative distance {0}")]
    NegativeDistance(f64),

    #[error("degenerate cluster: all membership weights are zero")]
    DegenerateCluster,

    #[error("derivatives have not been estimated for this curve set")]
    MissingDerivatives,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
