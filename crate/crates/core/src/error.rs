use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite intermediate in {0}")]
    NonFinite(&'static str),

    #[error("quadrature did not converge: estimated error {achieved:e} > requested {requested:e} (value {value:e})")]
    Quadrature { value: f64, achieved: f64, requested: f64 },

    #[error("cost guard: {0}")]
    CostGuard(String),

    #[error("circulant embedding is not nonnegative definite: min eigenvalue {min:e}, max {max:e}")]
    Embedding { min: f64, max: f64 },

    #[error("no signal: {0}")]
    NoSignal(String),
}

impl Error {
    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Quadrature { .. } | Error::Embedding { .. } | Error::NoSignal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}

pub(crate) fn finite(value: f64, context: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(context))
    }
}
