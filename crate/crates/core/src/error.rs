use std::path::PathBuf;

use crate::store::ClassId;

pub type Result<T> = std::result::Result<T, DsalError>;

#[derive(Debug, thiserror::Error)]
pub enum DsalError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("class overlap: class {0} is declared more than once")]
    ClassOverlap(ClassId),

    #[error("unknown label {0}: not in the column layout")]
    UnknownLabel(ClassId),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("factorization failed: {0}")]
    Factorization(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl DsalError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DsalError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        DsalError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        DsalError::Dimension(msg.into())
    }
}
