//! Command-line surface for the `twostep` toolkit: Monte Carlo tables,
//! diagnostics, and the estimators applied to user CSV files.

pub mod config;
pub mod data;
pub mod render;
pub mod run;

pub use config::{parse_config, Command, FirstStage, Format, RunConfig};
pub use data::{load_csv, write_selection_csv, LoadedSample, Roles, Sample};
pub use render::render;
pub use run::{execute, Outcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Estimation(#[from] twostep::Error),
}

impl CliError {
    /// Process exit code: 2 for usage errors, 3 when too many Monte Carlo
    /// replications failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Estimation(twostep::Error::Replications { .. }) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Usage(msg.into()))
}
