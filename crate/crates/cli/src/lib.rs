//! Command implementations behind the `kdlca` binary, exposed as a library
//! so integration tests can drive them directly.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod fixtures;
pub mod records;
pub mod seeding;
pub mod svg;

use std::fmt;

/// CLI-level failures, split by exit code: usage errors exit 2, data errors
/// exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn data<E: fmt::Display>(e: E) -> Self {
        CliError::Data(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
