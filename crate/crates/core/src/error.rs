use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid substrate model: {0}")]
    Substrate(String),

    #[error("atom database: {0}")]
    Database(String),

    #[error("{}:{line}: {message}", path.display())]
    DatabaseParse { path: PathBuf, line: usize, message: String },

    #[error("descriptor {0:?} is not present in the atom database")]
    Lookup(Vec<f64>),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("invalid target: {0}")]
    Target(String),

    #[error("invalid synthesis configuration: {0}")]
    Config(String),

    #[error("analysis: {0}")]
    Analysis(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
