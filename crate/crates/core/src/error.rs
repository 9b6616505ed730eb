use thiserror::Error;

/// Errors raised by the workbench. Variants map onto the CLI exit codes:
/// `Config` is a validation failure, everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value at step {step} ({context}); state = {state:?}")]
    NonFinite {
        step: i64,
        context: String,
        state: Vec<f64>,
    },

    #[error("certificate rejected: {0}")]
    Certificate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{0}")]
    Unsupported(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            got,
        }
    }
}

pub(crate) fn ensure(cond: bool, field: &str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(field, reason))
    }
}
