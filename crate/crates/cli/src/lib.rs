//! Configuration, presets and batch commands of the `covertime` tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

pub use commands::{run_command, CliError, Command, Outcome, RunOptions};
pub use config::{load_config, parse_config, ConfigError, LoadedConfig, ScenarioConfig};
