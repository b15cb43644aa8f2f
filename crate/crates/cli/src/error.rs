use std::path::PathBuf;

use lppgate_core::GateError;
use lppgate_gateway::GatewayError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("required input {} does not exist", .0.display())]
    MissingInput(PathBuf),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Gate(e) => e.kind(),
            CliError::Gateway(e) => e.kind(),
            CliError::MissingInput(_) => "missing_input",
            CliError::Usage(_) => "invalid_argument",
        }
    }

    pub fn to_json(&self, command: &str) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "command": command,
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;
