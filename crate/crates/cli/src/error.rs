use thiserror::Error;

/// Exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Validation = 1,
    Runtime = 2,
    NonConvergence = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("missing artifact {artifact}: run `utn {command}` first")]
    MissingArtifact { artifact: String, command: String },

    #[error("missing artifacts; run these stages first: {}", .0.join(", "))]
    MissingStages(Vec<String>),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Core(#[from] utn_core::Error),

    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Validation(_) => ExitStatus::Validation,
            CliError::NonConvergence(_) => ExitStatus::NonConvergence,
            _ => ExitStatus::Runtime,
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
