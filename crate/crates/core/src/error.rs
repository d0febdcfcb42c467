use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("weight matrix is not square: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("network must have at least one node")]
    Empty,

    #[error("measure is not a fully supported probability vector: {0}")]
    NonProbability(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("marginals are not both probability vectors: {0}")]
    InfeasibleMarginals(String),

    #[error("negative radicand {0:e} in distortion")]
    NegativeRadicand(f64),

    #[error("tangent vectors live on different bases")]
    BaseMismatch,

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
