use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    Grid(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("specification error: {0}")]
    Specification(String),

    #[error("integrability error (jump integral over the mark space): {0}")]
    Integrability(String),

    #[error("scheme violation at t={t}: spot {index} turned negative (factor {factor:.3e}); reduce the time step")]
    SchemeViolation { t: f64, index: usize, factor: f64 },

    #[error("ensemble too large: {requested} bytes requested, limit {limit}")]
    EnsembleTooLarge { requested: u64, limit: u64 },

    #[error("insufficient sample: {have} paths, need at least {need}")]
    InsufficientSample { have: usize, need: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
