use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PllError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PllError {
    #[error("domain error in {func}: argument {value} is outside the supported domain")]
    Domain { func: &'static str, value: f64 },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PllError {
    pub fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        PllError::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PllError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PllError::Domain { .. } | PllError::NonFinite(_) => 3,
            _ => 2,
        }
    }
}
