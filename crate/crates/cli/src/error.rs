use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input: expected {what} at {}", path.display())]
    MissingInput { what: &'static str, path: PathBuf },
    #[error("config key {key}: {message}")]
    ConfigKey { key: String, message: String },
    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] kdm_core::Error),
}

impl CliError {
    /// Stable machine-readable error class.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::MissingInput { .. } => "missing_input",
            CliError::ConfigKey { .. } | CliError::ConfigSyntax { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Core(kdm_core::Error::Config(_)) => "config",
            CliError::Core(kdm_core::Error::Format(_)) => "format",
            CliError::Core(kdm_core::Error::Io { .. }) => "io",
            CliError::Core(_) => "numeric",
        }
    }

    /// `error[code]: message` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code())
    }

    pub fn key(key: &str, message: impl Into<String>) -> Self {
        CliError::ConfigKey {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
