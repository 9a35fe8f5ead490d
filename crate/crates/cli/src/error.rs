//! Process-level error classification.
//!
//! Every failure is either an input problem (bad paths, malformed configs,
//! invalid data: exit code 2) or a processing problem (pipeline or output
//! failures on valid inputs: exit code 3).

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Processing(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Processing(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(message) => write!(f, "{message}"),
            CliError::Processing(message) => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Wraps an error as an input failure (exit code 2).
pub fn input<E: fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

/// Wraps an error as a processing failure (exit code 3).
pub fn processing<E: fmt::Display>(e: E) -> CliError {
    CliError::Processing(e.to_string())
}
