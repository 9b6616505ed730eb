use thiserror::Error;

/// CLI failure classes; each maps to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn invalid(field: &str, reason: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{field}: {reason}"))
    }
}

impl From<mcre_core::Error> for CliError {
    fn from(e: mcre_core::Error) -> Self {
        match e {
            mcre_core::Error::Config { .. } | mcre_core::Error::Dimension { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
