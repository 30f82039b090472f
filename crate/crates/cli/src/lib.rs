//! Configuration, plotting and subcommand plumbing for the `vss` binary.

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{run_command, CliError, Command, Outputs};
pub use config::{parse_config, parse_config_str, Config, ConfigError};
