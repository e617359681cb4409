use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(&'static str),

    #[error("covariance is not positive definite (determinant {0})")]
    NotPositiveDefinite(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("grid too small: {cells} cells, need at least {min}")]
    GridTooSmall { cells: usize, min: usize },

    #[error("misaligned fields: {0}")]
    Misaligned(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate regressor: |qp_term| below {0:e} on every unmasked cell")]
    DegenerateRegressor(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeTime(t))
    }
}
