//! Process-level error classes and the exit-code contract:
//! 0 success, 1 numerical failure, 2 configuration error.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, unknown names, unusable initial parameters.
    Config(String),
    /// The mathematics failed at runtime: rejected steps, failed cases,
    /// unwritable outputs mid-run.
    Numerical(String),
    /// Filesystem problems.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
