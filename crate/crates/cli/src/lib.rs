//! Library half of the `cvarcert` command-line tool: experiment configs,
//! certificate/simulation reports, and the three subcommand implementations.
//! The binary in `main.rs` only parses arguments and maps errors to exit
//! codes.

pub mod commands;
pub mod config;
pub mod report;

use thiserror::Error;

/// CLI failure modes, each with a fixed exit code:
/// 2 invalid config, 3 infeasible certificate/radius, 4 I/O failure.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::InvalidConfig(_) => "invalid-config",
            CliError::Infeasible(_) => "infeasible-radius",
            CliError::Io(_) => "io-failure",
        }
    }

    /// Machine-readable form emitted on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "code": self.code(), "message": self.to_string() }
        })
        .to_string()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
