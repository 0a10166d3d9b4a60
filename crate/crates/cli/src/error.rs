use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("duplicate scenario name `{0}`")]
    DuplicateScenario(String),
    #[error("invalid scenario name `{0}`")]
    InvalidName(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("{scenario}: {message}")]
    Param { scenario: String, message: String },
    #[error("{scenario}: invalid settings: {message}")]
    Settings { scenario: String, message: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{scenario}: {message}")]
    Numeric { scenario: String, message: String },
    #[error("{scenario}: cannot write {}: {source}", path.display())]
    Io {
        scenario: String,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 1 for output errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric { .. } => 3,
            Self::Io { .. } => 1,
        }
    }
}
