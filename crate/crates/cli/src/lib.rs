//! Library side of the `emskin` command-line tool: configuration, the shared
//! synthesis pipeline and the command implementations.

pub mod commands;
pub mod config;
pub mod pipeline;

use std::fmt;

/// Failure carrying the process exit code: 2 for bad input, 1 for runtime errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    /// Runtime failure attributed to a library module.
    pub fn in_module(module: &str, err: emskin::Error) -> Self {
        Self::runtime(format!("{module}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
