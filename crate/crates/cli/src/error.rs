use std::io;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NON_CONVERGENCE: i32 = 3;
    pub const PROPERTY_FAILURE: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("failed to parse config: {0}")]
    Parse(String),

    #[error("solver did not converge for content {content} after {sweeps} sweeps")]
    NonConvergence { content: usize, sweeps: usize },

    #[error("{failed} propert{} failed", if *.failed == 1 { "y" } else { "ies" })]
    PropertyFailure { failed: usize },

    #[error("seed {seed}, content {content}: {source}")]
    Run {
        seed: u64,
        content: usize,
        #[source]
        source: refresh_core::Error,
    },

    #[error(transparent)]
    Core(#[from] refresh_core::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Parse(_) => exit::CONFIG,
            CliError::NonConvergence { .. } => exit::NON_CONVERGENCE,
            CliError::PropertyFailure { .. } => exit::PROPERTY_FAILURE,
            CliError::Run { .. } | CliError::Core(_) | CliError::Io(_) => exit::OTHER,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
