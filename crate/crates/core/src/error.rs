//! Error type shared by every module of the crate.

/// Crate-wide error enumeration.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A point left the unit-interval state space.
    #[error("point {x} is outside the domain [0,1)")]
    OutOfDomain { x: f64 },

    /// A driving sequence is shorter than the requested horizon.
    #[error("driving sequence too short: need {needed} letters, have {available}")]
    InsufficientRandomness { needed: usize, available: usize },

    /// A grid-mode quadrature was requested beyond the trustworthy horizon.
    #[error(
        "grid precision cap exceeded: horizon {n} > cap {cap} for a {grid}-point grid \
         (slope product amplifies grid error past quadrature validity)"
    )]
    PrecisionCap { n: usize, cap: usize, grid: usize },

    /// A scalar parameter violated its precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Operation not defined for the given object (e.g. continuous alphabets).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Caller violated an operation contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A regression or model fit could not be performed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Invalid construction data (matrices, weights, branch tables...).
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
