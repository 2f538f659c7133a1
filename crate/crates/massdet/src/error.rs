use std::fmt;

/// Failure of a subcommand, carrying its exit code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Inputs that exist but are malformed or inconsistent (exit 2).
    #[error("{0}")]
    Validation(String),
    /// Anything that fails after validation (exit 3).
    #[error("{0}")]
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        CliError::Validation(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }

    /// The single stderr line: `massdet: error[<kind>]: <message>`.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("massdet: error[{}]: {}", self.kind(), msg.trim())
    }
}

/// Core errors raised while checking inputs.
pub fn invalid(e: massdet_core::Error) -> CliError {
    CliError::Validation(e.to_string())
}

/// Core errors raised during the actual work.
pub fn failed(e: massdet_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}
