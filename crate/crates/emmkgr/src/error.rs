use thiserror::Error;

/// Top-level error with the process exit code baked in:
/// 2 usage/input, 3 numeric failure, 4 artifact mismatch.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Mismatch(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Input(_) => 2,
            AppError::Numeric(_) => 3,
            AppError::Mismatch(_) => 4,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        AppError::Input(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        AppError::Numeric(msg.into())
    }

    pub fn mismatch(msg: impl Into<String>) -> Self {
        AppError::Mismatch(msg.into())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Input(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
