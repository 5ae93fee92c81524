use thiserror::Error;

/// Errors raised by the engine. Each variant maps to one CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// A violated precondition on user-supplied parameters (band ordering,
    /// CFL, grid shape, domination). Reported with exit code 2.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the domain of an operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// NaN/∞ produced during a computation. Reported with exit code 3.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
