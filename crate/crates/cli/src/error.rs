use std::process::ExitCode;

use ppsde_core::noise::NoiseError;
use ppsde_core::{McError, SchemeError, TamingError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid input: exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failure while running: exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        let msg = e.to_string();
        match e {
            McError::RefNotFiner { .. }
            | McError::TooFewPaths { .. }
            | McError::NoLevels
            | McError::InvalidReference(_)
            | McError::UnsupportedScheme(_)
            | McError::InvalidTarget(_)
            | McError::InvalidInput(_)
            | McError::Model(_)
            | McError::Scheme(_)
            | McError::Noise(NoiseError::LevelTooDeep(_))
            | McError::Noise(NoiseError::NonPositiveHorizon(_)) => CliError::Config(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TamingError> for CliError {
    fn from(e: TamingError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        match e {
            NoiseError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
