use thiserror::Error;

/// Errors raised by tensor arithmetic, rank fitting, measurement and recovery routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("size limit exceeded: {requested} entries requested, cap is {cap}")]
    TooLarge { requested: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
