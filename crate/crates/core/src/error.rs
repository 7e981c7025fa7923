use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left:?}, right is {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("dataset validation failed: {0}")]
    Validation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("cannot transfer parameter `{name}`: expected shape {expected:?}, snapshot has {found:?}")]
    Transfer {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("{phase} diverged at epoch {epoch}: loss is {loss}")]
    Divergence {
        phase: &'static str,
        epoch: usize,
        loss: f64,
    },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from bad input or configuration rather than
    /// a failure while computing. Front ends map this to a distinct exit code.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Usage(_)
                | Error::Graph(_)
                | Error::NotFound(_)
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Data(_)
                | Error::Transfer { .. }
                | Error::Snapshot(_)
                | Error::Json(_)
        )
    }
}
