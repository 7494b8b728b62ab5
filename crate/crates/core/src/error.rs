use thiserror::Error;

/// Errors raised by the numerical kernels, samplers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The solver produced a NaN or infinite value.
    #[error("non-finite value in solver state at step {step}")]
    NonFinite { step: usize },

    /// Adaptive quadrature hit its subdivision budget before meeting the tolerance.
    #[error("quadrature did not converge: estimate {value:e}, error {error:e}")]
    Quadrature { value: f64, error: f64 },

    /// A shape or size mismatch between lattice objects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
