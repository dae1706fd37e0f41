//! Experiment runner behind the `poincare` binary: config parsing, data
//! sources, the six commands and the result-file format.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

pub use commands::{run, Report};
pub use config::{ConfigFile, Params};
pub use error::{CliError, CliResult};
pub use output::{ResultFile, Table};

/// Keys that only affect where and how a run executes, never its results;
/// they are stripped before hashing.
pub const RUNTIME_KEYS: &[&str] = &["out", "model_out", "threads"];
