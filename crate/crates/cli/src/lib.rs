//! Configuration-driven front end for `ousse-core`.
//!
//! The binary is a thin wrapper; parsing, validation and the subcommands
//! live here so they can be tested without spawning processes.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{covariance_csv, simulate, verify, CliError, CovarianceArgs, VerifyReport};
pub use config::{parse_config, ConfigError, ExperimentConfig};
