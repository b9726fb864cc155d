use thiserror::Error;

/// Command failures, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    #[error("usage: {0}")]
    Usage(String),
    /// Invalid or inconsistent input data (exit 2).
    #[error("data: {0}")]
    Data(String),
    /// Anything else (exit 3).
    #[error("internal: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<mflkit::Error> for CliError {
    fn from(e: mflkit::Error) -> Self {
        use mflkit::Error as E;
        match e {
            E::Config(_) => CliError::Usage(e.to_string()),
            E::Io(_) | E::Json(_) | E::Format { .. } | E::ValueOutOfRange { .. } | E::Alignment(_) | E::Data(_) => {
                CliError::Data(e.to_string())
            }
            E::Shape(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("invalid JSON: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
