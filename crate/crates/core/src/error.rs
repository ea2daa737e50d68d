use std::path::PathBuf;

use thiserror::Error;

/// Broad error family, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Io,
    Validation,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV {path} (line {line}): {message}")]
    MalformedCsv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("malformed JSON {path}: {message}")]
    MalformedJson { path: PathBuf, message: String },

    #[error("duplicate sample id {id:?} in {context}")]
    DuplicateId { id: String, context: String },

    #[error("value {value:?} at row {row} of source {source_name:?} is not in its vocabulary")]
    VocabularyViolation {
        row: usize,
        source_name: String,
        value: String,
    },

    #[error("non-finite value in main features at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("sample {index} has zero degree in the affinity graph")]
    ZeroDegree { index: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::Io { .. } => ErrorFamily::Io,
            Error::ZeroDegree { .. } | Error::Numeric(_) => ErrorFamily::Numeric,
            _ => ErrorFamily::Validation,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
