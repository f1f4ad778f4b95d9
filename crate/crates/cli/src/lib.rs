//! Command implementations behind the `ndct` binary.

pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, unreadable input or unwritable output.
    #[error("{0}")]
    Input(String),
    /// The optimizer could not complete.
    #[error("optimization failed: {0}")]
    Optimization(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Optimization(_) => 3,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}
