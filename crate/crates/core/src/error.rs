use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("node `{0}` appears in the edge list but has no sensitive attribute")]
    MissingAttribute(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("split failed: {0}")]
    Split(String),

    #[error("constraint {index} ({label}) has target {target} outside the open interval (0, {members})")]
    InfeasibleTarget {
        index: usize,
        label: String,
        target: f64,
        members: usize,
    },

    #[error("I-projection did not converge after {iterations} iterations (residual {residual:e})")]
    ProjectionNotConverged { iterations: usize, residual: f64 },

    #[error("non-finite gradient weight at pair {pair} ({i}, {j})")]
    NonFiniteGradient { pair: usize, i: usize, j: usize },

    #[error("training aborted at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
