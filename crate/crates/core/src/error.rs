use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("Hurst exponent {0} outside the open interval (1/2, 1)")]
    InvalidHurst(f64),

    #[error("fractional order {0} outside the open interval (0, 1)")]
    InvalidOrder(f64),

    #[error("{what}: argument {value} outside the domain")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid is not uniform")]
    NonUniformGrid,

    #[error("function must vanish at the origin, got f(0) = {0}")]
    NonZeroAtOrigin(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("query ({t}, {x}) outside the tabulated volatility grid")]
    Extrapolation { t: f64, x: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gate observes time index {observe} after the interval start {start}")]
    FutureInformation { observe: usize, start: usize },

    #[error("matrix factorization failed: {0}")]
    Factorization(String),
}

pub type Result<T> = core::result::Result<T, Error>;
