use thiserror::Error;

/// Errors produced by the estimators and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The first-stage index coefficient is not identified from the data.
    #[error("identification error: {0}")]
    Identification(String),

    /// The binary outcome is perfectly separated by the covariates.
    #[error("perfect separation detected: coefficient norm {norm:.3e} exceeds cap {cap:.1e}")]
    Separation { norm: f64, cap: f64 },

    #[error("no convergence after {iterations} iterations (gradient sup-norm {gradient:.3e})")]
    Convergence { iterations: usize, gradient: f64 },

    /// Every bandwidth candidate produced a degenerate fit.
    #[error("bandwidth selection failed: {0}")]
    Bandwidth(String),

    /// A second-stage quantity could not be formed (singular matrix, empty arm, ...).
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("diagnostic error: {0}")]
    Diagnostic(String),

    /// Too many Monte Carlo replications failed.
    #[error("{failures} of {reps} replications failed (limit 5%): {first}")]
    Replications {
        failures: usize,
        reps: usize,
        first: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
