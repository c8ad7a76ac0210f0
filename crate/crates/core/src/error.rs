use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument fell outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A valid call shape was combined with options that do not apply to it.
    #[error("usage error: {0}")]
    Usage(String),

    /// An adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}")]
    NonConvergence { estimate: f64, error: f64 },

    /// A truncated density whose normalizer underflowed.
    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    /// A configuration value violates a model invariant.
    #[error("invalid configuration: {field}: {reason}")]
    Validation { field: &'static str, reason: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}
