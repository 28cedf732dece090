use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GuapError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GuapError {
    #[error("target node {target} is not an original node (n = {n})")]
    InvalidTarget { target: usize, n: usize },

    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparameter { name: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: edge references unknown node `{node}` (line {line})")]
    DanglingEdge {
        path: PathBuf,
        line: usize,
        node: String,
    },

    #[error("dataset validation failed: {0}")]
    Validation(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("probability {0} is outside the open interval (0, 1)")]
    Domain(f64),

    #[error("attack success rate is undefined over an empty node set")]
    EmptyNodeSet,

    #[error("all class gradient differences vanish for node {node}")]
    DegenerateGradient { node: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl GuapError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GuapError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn hyper(name: &'static str, reason: impl Into<String>) -> Self {
        GuapError::InvalidHyperparameter {
            name,
            reason: reason.into(),
        }
    }
}
