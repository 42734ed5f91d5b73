use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum ArError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("relaxation diverged at layer {layer}, iteration {iteration}")]
    Divergence { layer: usize, iteration: usize },

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: file truncated (expected {expected} bytes, found {found})")]
    Length {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ArError>;

impl ArError {
    pub(crate) fn shape(op: &'static str, left: impl ToString, right: impl ToString) -> Self {
        ArError::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ArError::Io {
            path: path.into(),
            source,
        }
    }
}
