use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid state: norm deviates from 1 by {0:e}")]
    InvalidState(f64),

    #[error("step size {dt_max:e} s too coarse, at most {limit:e} s allowed")]
    StepSize { dt_max: f64, limit: f64 },

    #[error("sensitivity diverges at zero contrast")]
    InfiniteSensitivity,

    #[error("outside model validity: {0}")]
    OutOfValidity(String),

    #[error("fit failed: {0}")]
    FitFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
