use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        BenchError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit status: 2 config, 3 I/O or file format, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Io { .. } | BenchError::Format { .. } | BenchError::Csv(_) => 3,
            BenchError::Numeric(_) => 4,
        }
    }
}

impl From<tensor_iht::Error> for BenchError {
    fn from(e: tensor_iht::Error) -> Self {
        match e {
            tensor_iht::Error::Config(_) | tensor_iht::Error::TooLarge { .. } => BenchError::Config(e.to_string()),
            tensor_iht::Error::Shape(_) => BenchError::Numeric(e.to_string()),
        }
    }
}
