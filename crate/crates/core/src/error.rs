use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SneError>;

#[derive(Debug, Error)]
pub enum SneError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("duplicate points {first} and {second}: kernel width would be zero")]
    DuplicatePoints { first: usize, second: usize },

    #[error("perplexity {target} unreachable for row {row}; achieved {achieved}")]
    PerplexityUnreachable { row: usize, target: f64, achieved: f64 },

    #[error("non-finite value at iteration {iter}: {what}")]
    NonFinite { iter: usize, what: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("landmark {landmark} has no completed random walks")]
    DisconnectedLandmark { landmark: usize },

    #[error("landmark {landmark} cannot reach any other landmark")]
    UnreachableLandmark { landmark: usize },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SneError {
    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            SneError::Config(_) => 1,
            SneError::Data(_)
            | SneError::Shape(_)
            | SneError::DuplicatePoints { .. }
            | SneError::Parse { .. }
            | SneError::Io { .. } => 2,
            SneError::PerplexityUnreachable { .. }
            | SneError::NonFinite { .. }
            | SneError::Numeric(_)
            | SneError::DisconnectedLandmark { .. }
            | SneError::UnreachableLandmark { .. } => 3,
        }
    }
}
