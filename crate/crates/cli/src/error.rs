//! Command-line error classification.
//!
//! Two buckets, matching the process exit codes: usage errors (bad
//! parameters, exit 2) and data errors (unreadable, malformed, or
//! inconsistent files, exit 3). Success is exit 0.

use std::fmt;

/// An error with an exit-code classification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// The command line asked for something invalid. Exit code 2.
    Usage(String),
    /// An input file is unreadable, malformed, or inconsistent with its
    /// companions. Exit code 3.
    Data(String),
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        Self::Usage(message.to_string())
    }

    pub fn data(message: impl fmt::Display) -> Self {
        Self::Data(message.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
