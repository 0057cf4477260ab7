//! Command-line front end for `rangenav`: simulation, observer runs,
//! observability audits and parameter sweeps driven by a flat TOML config.

pub mod commands;
pub mod config;

pub use commands::{cmd_audit, cmd_observe, cmd_simulate, cmd_sweep, CliError};
pub use config::{ConfigError, RunConfig};
