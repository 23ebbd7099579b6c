use std::path::PathBuf;

/// Errors produced by the pointmanifold library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{layer}: {message}")]
    Contract { layer: String, message: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("version mismatch: {0}")]
    Version(String),

    #[error("missing embedding cache for cloud '{cloud}' (expected {path}); run `pointmanifold embed` first")]
    MissingCache { cloud: String, path: PathBuf },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(layer: &str, message: impl Into<String>) -> Self {
        Error::Contract {
            layer: layer.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in numerical routines rather than
    /// in malformed data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
