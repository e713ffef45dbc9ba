//! Command-line front end of the unlearning arena: experiment configs, sweeps,
//! theory demonstrations and result files.

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod dp;
pub mod perfect;
pub mod results;

pub use commands::{run, Cli, Status};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{origin}: {message}")]
    Config { origin: String, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] unlearn_arena::Error),
    #[error("{}: expected `{}`, found `{found}`", path.display(), results::SCHEMA_LINE)]
    MixedSchemaVersions { path: PathBuf, found: String },
    #[error("{}: no results*.csv files found", .0.display())]
    EmptyResults(PathBuf),
}

impl CliError {
    /// Configuration errors and runtime errors both exit with 1; property failures use 2.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
