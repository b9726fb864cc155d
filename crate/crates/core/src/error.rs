use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("value {value} out of range [0, 4095] at row {row}, column {col}")]
    ValueOutOfRange { row: usize, col: usize, value: u16 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("invalid data: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
