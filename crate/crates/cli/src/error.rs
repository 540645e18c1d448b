use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("model/query mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    MissingReport(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::InsufficientData(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::MissingReport(_) => 5,
            CliError::Internal(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
