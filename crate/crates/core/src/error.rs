use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("invalid variable `{var}`: {msg}")]
    Schema { var: String, msg: String },

    #[error("person references absent household `{0}`")]
    OrphanPerson(String),

    #[error("unknown category `{label}` for variable `{var}`")]
    UnknownCategory { var: String, label: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("missing variable `{0}`")]
    MissingVariable(String),

    #[error("household `{id}` has {size} persons, more than the window of {window}")]
    WindowExceeded { id: String, size: usize, window: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("schema fingerprint mismatch: model has {expected}, data has {found}")]
    FingerprintMismatch { expected: String, found: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
