use std::path::PathBuf;

use sobgeo::error::Error as CoreError;
use thiserror::Error;

pub const EXIT_INVARIANT: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IMMERSION_LOST: u8 = 3;
pub const EXIT_NO_CONVERGENCE: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{failed} invariant(s) failed")]
    InvariantsFailed { failed: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
            CliError::Core(e) => core_exit_code(e),
            CliError::InvariantsFailed { .. } => EXIT_INVARIANT,
        }
    }
}

pub fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::ImmersionLost { .. } | CoreError::ParticleCrossing { .. } | CoreError::BlowUp { .. } => {
            EXIT_IMMERSION_LOST
        }
        CoreError::NoConvergence { .. } | CoreError::Eigen(_) => EXIT_NO_CONVERGENCE,
        CoreError::Solver { source, .. } => core_exit_code(source),
        _ => EXIT_VALIDATION,
    }
}

pub type CliResult<T> = Result<T, CliError>;
