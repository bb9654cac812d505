use doacert_core::approx::ApproxError;
use doacert_core::certify::CertifyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("archive: {0}")]
    Archive(String),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Exit code: configuration and usage problems are 2, everything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            _ => 1,
        }
    }
}
