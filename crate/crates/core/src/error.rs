use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("step size underflow at t = {t}: h = {h:e} fell below h_min = {h_min:e}")]
    StepUnderflow { t: f64, h: f64, h_min: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field rejected: {0}")]
    InvalidField(String),

    #[error("realization {index} failed: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("fit failed for mode ({k1},{k2}): {reason}")]
    FitFailure { k1: i32, k2: i32, reason: String },

    #[error("covariance factorization failed for sigma = {sigma}")]
    Factorization { sigma: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
