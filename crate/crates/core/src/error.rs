use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error category, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed line: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("missing behavior file for '{behavior}': {path}")]
    MissingBehaviorFile { behavior: String, path: PathBuf },

    #[error("record references undeclared behavior '{0}'")]
    UndeclaredBehavior(String),

    #[error("empty target behavior '{0}'")]
    EmptyTarget(String),

    #[error("unknown behavior '{0}'")]
    UnknownBehavior(String),

    #[error("invalid perturbation: {0}")]
    Perturbation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("{component}: {message}")]
    Objective {
        component: &'static str,
        message: String,
    },

    #[error("non-finite values in {tensor}")]
    NonFinite { tensor: String },

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

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

    pub(crate) fn objective(component: &'static str, message: impl Into<String>) -> Self {
        Error::Objective {
            component,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnknownBehavior(_) | Error::Perturbation(_) => {
                ErrorKind::Config
            }
            Error::NonFinite { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}
