use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: String },

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate feature {0:?}: zero dispersion")]
    DegenerateFeature(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("no evaluable observations")]
    NoEvaluableObservations,

    #[error("predictor protocol error: {0}")]
    Protocol(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by the caller's configuration rather than by the
    /// data or the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::UnknownFeature(_) | Error::InvalidStep(_) | Error::InvalidArgument(_))
    }
}
