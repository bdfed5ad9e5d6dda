use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {rows}x{cols}: both dimensions must be at least 2")]
    InvalidGrid { rows: usize, cols: usize },

    #[error("requested {requested} modes but the operator only has dimension {available}")]
    TooManyModes { requested: usize, available: usize },

    #[error("eigensolver did not converge: worst residual {residual:e} on mode {mode}")]
    EigenSolve { mode: usize, residual: f64 },

    #[error("modal basis is rank deficient (Gram matrix not positive definite)")]
    SingularBasis,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("mode index {index} out of range for a basis of {len} modes")]
    ModeIndex { index: usize, len: usize },

    #[error("basis provides {available} invariant amplitudes but {requested} were requested; build a larger basis")]
    InsufficientModes { requested: usize, available: usize },

    #[error("image {rows}x{cols} is smaller than the required {min_rows}x{min_cols}")]
    ImageTooSmall {
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training data contains a single class; at least two are required")]
    SingleClass,

    #[error("non-finite feature value produced by extractor `{extractor}`")]
    NonFinite { extractor: String },

    #[error("empty input")]
    EmptyInput,

    #[error("failed to read image {path}: {message}")]
    ImageLoad { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
