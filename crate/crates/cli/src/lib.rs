//! File formats, experiment configs and verification sweeps on top of
//! [`ntk_eigen_core`].

pub mod config;
pub mod experiments;
pub mod io;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] ntk_eigen_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
}

impl HarnessError {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        HarnessError::Format { what, detail: detail.into() }
    }

    /// Whether the error came from user input rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::Json(_) | HarnessError::Csv(_) | HarnessError::Format { .. } | HarnessError::Core(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
