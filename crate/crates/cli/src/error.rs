use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("simulation failed {0}")]
    Simulation(#[from] mx_core::SimError),
    #[error("{0}")]
    Mismatch(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Simulation(_) => 2,
            CliError::Mismatch(_) => 3,
        })
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<Vec<mx_core::ConfigError>> for CliError {
    fn from(errors: Vec<mx_core::ConfigError>) -> Self {
        let list: Vec<String> = errors.iter().map(ToString::to_string).collect();
        CliError::Validation(format!("invalid configuration: {}", list.join("; ")))
    }
}
