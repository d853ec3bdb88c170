use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SrcaError>;

#[derive(Debug, Error)]
pub enum SrcaError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("ragged csv: row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("column {column} has zero variance; cannot z-score")]
    ZeroVariance { column: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("{count} candidate subsets exceed the exhaustive cap of {cap}; use the l1_relaxed strategy")]
    TooManySubsets { count: u128, cap: u128 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid model file: {0}")]
    Model(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SrcaError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            SrcaError::InvalidArgument(_) => 1,
            SrcaError::Singular(_) | SrcaError::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SrcaError::Io {
            path: path.into(),
            source,
        }
    }
}
