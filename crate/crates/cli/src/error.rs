use thiserror::Error;

/// Operational failures; all of them exit with code 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("{path}: {message}")]
    Invalid { path: String, message: String },

    #[error("{0}")]
    Core(#[from] ensemble_core::Error),
}

impl CliError {
    pub fn invalid(path: &str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            path: path.to_string(),
            message: message.into(),
        }
    }

    pub fn field(path: &str, e: ensemble_core::Error) -> Self {
        CliError::invalid(path, e.to_string())
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Parse(_) => "parse",
            CliError::Invalid { .. } => "validation",
            CliError::Core(_) => "runtime",
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
