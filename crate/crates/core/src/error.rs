use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the audit toolkit.
///
/// Variants are grouped so a caller can map them onto coarse failure
/// classes (configuration, data, training, I/O) for exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("codebook {path}: {message}")]
    CodebookParse { path: PathBuf, message: String },

    #[error("codebook invariant violated: {0}")]
    CodebookInvalid(String),

    #[error("{path}: {message}")]
    DataFormat { path: PathBuf, message: String },

    #[error("row {row}, column {column}: code {code} is not declared as a category or missing code")]
    UnknownCode { row: usize, column: String, code: i32 },

    #[error("row {row}: cohort code {code} in {column} is outside 1-8")]
    CohortCodeOutOfRange { row: usize, column: String, code: i32 },

    #[error("row {row}: stay-duration code {code} has no day-range mapping")]
    UnmappedStayCode { row: usize, code: i32 },

    #[error("variable {0} not present in the table")]
    MissingVariable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {label} has {count} rows, need at least {need}")]
    ClassTooSmall { label: u8, count: usize, need: usize },

    #[error("training failed: {0}")]
    Train(String),

    #[error("prediction input columns do not match the model's training columns: {0}")]
    ColumnMismatch(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Coarse failure class, used by the CLI to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::CodebookParse { .. }
            | Error::CodebookInvalid(_)
            | Error::DataFormat { .. }
            | Error::UnknownCode { .. }
            | Error::CohortCodeOutOfRange { .. }
            | Error::UnmappedStayCode { .. }
            | Error::MissingVariable(_)
            | Error::ClassTooSmall { .. }
            | Error::MetricUndefined(_) => ErrorClass::Data,
            Error::Train(_) | Error::ColumnMismatch(_) => ErrorClass::Train,
            Error::Io { .. } => ErrorClass::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Train,
    Io,
}

pub type Result<T> = std::result::Result<T, Error>;
