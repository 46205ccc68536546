use thiserror::Error;

use qms_core::QmsError;

#[derive(Debug, Error)]
pub enum CliError {
    /// The config file is missing, malformed, or violates the schema.
    #[error("config error: {0}")]
    Schema(String),
    /// A computed quantity failed its check or could not be computed.
    #[error("numeric failure in {}: {detail}", quantities.join(", "))]
    Numeric { quantities: Vec<String>, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn schema(msg: impl Into<String>) -> Self {
        CliError::Schema(msg.into())
    }

    pub fn numeric(quantity: impl Into<String>, err: QmsError) -> Self {
        CliError::Numeric {
            quantities: vec![quantity.into()],
            detail: err.to_string(),
        }
    }

    /// Process exit status: 2 for config errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numeric { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
