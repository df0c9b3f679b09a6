//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by link evaluation, integration, adjustment solving,
/// model construction, sampling and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{link} link is undefined at {value}")]
    LinkDomain { link: &'static str, value: f64 },

    #[error("model undefined: kappa = {kappa} is below sqrt(var) = {}", var.sqrt())]
    ModelUndefined { kappa: f64, var: f64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("failed to converge: {0}")]
    Convergence(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
