use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite feature value {value} at feature {feature}")]
    NonFiniteFeature { feature: usize, value: f64 },

    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(i64),

    #[error("NaN nonconformity score at position {0}")]
    NanScore(usize),

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidSignificance(f64),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("k = {k} exceeds training size {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("empty training set")]
    EmptyTraining,

    #[error("invalid split: proper training size {m} must satisfy 1 <= m < {l}")]
    InvalidSplit { m: usize, l: usize },

    #[error("no significance level configured for category {0}")]
    MissingCategory(usize),

    #[error("sigma precondition violated: {0}")]
    SigmaPrecondition(String),

    #[error("no singleton predictions; singleton error estimate undefined")]
    NoSingletons,

    #[error("corrected significance level {0} is not positive")]
    UnusableEpsilonTilde(f64),

    #[error("custom delta violates bound: ln(1/delta) = {given} < {required}")]
    CustomDeltaTooLarge { given: f64, required: f64 },

    #[error("dataset has {have} examples but {need} are required")]
    DatasetTooSmall { have: usize, need: usize },

    #[error("csv: missing column {0:?}")]
    MissingColumn(String),

    #[error("csv: non-numeric feature {value:?} in column {column:?} at row {row}")]
    NonNumericFeature { column: String, row: usize, value: String },

    #[error("csv: non-finite feature in column {column:?} at row {row}")]
    NonFiniteCell { column: String, row: usize },

    #[error("csv: label cardinality must be exactly 2, found {0}")]
    LabelCardinality(usize),

    #[error("csv: empty file")]
    EmptyFile,

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for CLI exit codes and messages.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_)
            | Error::InvalidSignificance(_)
            | Error::InvalidSplit { .. }
            | Error::KTooLarge { .. }
            | Error::MissingCategory(_)
            | Error::CustomDeltaTooLarge { .. }
            | Error::InvalidCovariance(_) => "config",
            Error::MissingColumn(_)
            | Error::NonNumericFeature { .. }
            | Error::NonFiniteCell { .. }
            | Error::LabelCardinality(_)
            | Error::EmptyFile
            | Error::Csv(_)
            | Error::DatasetTooSmall { .. }
            | Error::EmptyTraining => "data",
            Error::Io { .. } | Error::Json(_) => "io",
            _ => "numeric",
        }
    }
}
