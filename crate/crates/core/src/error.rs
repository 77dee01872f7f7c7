//! Crate-wide error type.

/// Errors produced by construction-time validation and by the numerical
/// kernels.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: must satisfy {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error(
        "quadrature stopped at estimated error {achieved:.3e} (requested {requested:.3e}) \
         after {panels} panels"
    )]
    Quadrature {
        achieved: f64,
        requested: f64,
        panels: usize,
    },

    #[error("grid of {n} points exceeds the exact-sampler cap of {cap}; no approximate sampler is provided")]
    GridTooLarge { n: usize, cap: usize },

    #[error(
        "covariance factorization failed for mode (alpha = {alpha:.6e}, nu = {nu:.6e}, \
         h = {h:.6}) even with diagonal jitter {max_jitter:.1e}"
    )]
    FactorizationFailed {
        alpha: f64,
        nu: f64,
        h: f64,
        max_jitter: f64,
    },

    #[error("time index {index} out of range for grid of {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("grid resolution {n} aliases the cutoff band R = {r}; need at least {min}")]
    GridTooCoarse { n: usize, r: u32, min: usize },

    #[error("field history insufficient: need {needed} grid points before index {at}, have {available}")]
    InsufficientHistory {
        needed: usize,
        available: usize,
        at: usize,
    },

    #[error("non-finite state for particle {particle} at step {step}")]
    NonFiniteState { particle: usize, step: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, name: &'static str, value: f64, requirement: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            requirement,
        })
    }
}
