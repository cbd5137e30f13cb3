use thiserror::Error;

/// Errors raised by the numerical kernels and pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge after {terms} terms (partial value {partial:e})")]
    NonConvergence { terms: usize, partial: f64 },

    #[error("cancellation too severe for the series route (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("sample outside diagram domain: {0}")]
    OutsideDomain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of a numerical method (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::IllConditioned { .. } | Error::Quadrature(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
