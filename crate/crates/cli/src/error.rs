use thiserror::Error;

/// Driver errors, each mapped to a documented exit code:
/// 2 = config parse failure, 3 = parameter precondition failure,
/// 1 = runtime failure (carrying the failing stage).
#[derive(Error, Debug)]
pub enum CliError {
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("invalid parameter `{parameter}`: {message}")]
    Precondition { parameter: String, message: String },

    #[error("runtime failure in {stage}: {message}")]
    Runtime { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } => 2,
            CliError::Precondition { .. } => 3,
            CliError::Runtime { .. } => 1,
        }
    }

    pub fn precondition(parameter: &str, message: impl Into<String>) -> Self {
        CliError::Precondition {
            parameter: parameter.to_string(),
            message: message.into(),
        }
    }

    pub fn runtime(stage: &str, err: impl std::fmt::Display) -> Self {
        CliError::Runtime {
            stage: stage.to_string(),
            message: err.to_string(),
        }
    }
}

/// Fold a core error into the driver error model, keeping stage identity.
pub fn from_core(default_stage: &str, err: sparse_transfer::Error) -> CliError {
    match err {
        sparse_transfer::Error::Stage { stage, source } => CliError::Runtime {
            stage: stage.to_string(),
            message: source.to_string(),
        },
        other => CliError::runtime(default_stage, other),
    }
}
