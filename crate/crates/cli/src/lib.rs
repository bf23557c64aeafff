//! Experiment runner for age-driven cache refresh policies.
//!
//! Subcommands `solve`, `enumerate`, `learn`, `sweep` and `validate` read an
//! [`config::ExperimentConfig`] and emit plain-text reports or CSV.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
