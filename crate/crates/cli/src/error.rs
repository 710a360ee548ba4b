//! Exit-code policy: 2 for anything wrong with the input (files, shapes,
//! parse failures), 3 for a numerical failure on valid input. Usage errors
//! never reach this type; clap handles them and main exits 64.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input data, bad argument values. Exit 2.
    Input(String),
    /// The computation itself failed: degenerate design, every candidate
    /// excluded, infeasible grids. Exit 3.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) | CliError::Numeric(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<srrr_core::Error> for CliError {
    fn from(err: srrr_core::Error) -> Self {
        use srrr_core::Error;
        match err {
            Error::EmptyMatrix { .. }
            | Error::NonFinite { .. }
            | Error::ShapeMismatch(_)
            | Error::InvalidParameter(_)
            | Error::Csv(_) => CliError::Input(err.to_string()),
            _ => CliError::Numeric(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Input(format!("report serialization: {err}"))
    }
}
