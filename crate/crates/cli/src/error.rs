use ossl_core::Error;
use thiserror::Error as ThisError;

/// Failure of a subcommand, grouped by exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Other(_) => 1,
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        Self::Other(format!("{context}: {e}"))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Validation { .. } => Self::Config(msg),
            Error::Parse { .. } | Error::Shape { .. } | Error::UndefinedMetric { .. } => Self::Data(msg),
            Error::Diverged { .. } | Error::NonFinite { .. } | Error::Evaluation(_) => Self::Numerical(msg),
            Error::Io(_) => Self::Data(msg),
        }
    }
}
