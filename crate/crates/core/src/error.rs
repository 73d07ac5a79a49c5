use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure categories, coarse enough to map onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("parse error in {path} at data row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("raster format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("coverage error: covariate `{covariate}` has no valid values in the block around {target}")]
    Coverage { covariate: String, target: String },

    #[error("vegetation index {index} is undefined: {reason}")]
    Domain { index: &'static str, reason: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate column `{0}`: zero variance")]
    DegenerateColumn(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("collinear columns {columns:?}: design is rank deficient")]
    RankDeficient { columns: Vec<usize> },

    #[error("validation SSE of split {split} is zero; supply an SSE floor (default 1e-12)")]
    DegenerateWeight { split: usize },

    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Parameter(_) => ErrorClass::Config,
            Error::Singular(_)
            | Error::Numeric(_)
            | Error::RankDeficient { .. }
            | Error::DegenerateWeight { .. } => ErrorClass::Numeric,
            Error::Context { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
