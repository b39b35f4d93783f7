//! Error classification for exit codes.
//!
//! 2 = config error (bad keys, unparsable values, out-of-range numbers),
//! 3 = data error (missing or corrupt scenes, checkpoints, logs, IO),
//! 4 = ordering error (a pipeline stage ran before its prerequisite).

use bivo_planner::PlannerError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("ordering: {0}")]
    Ordering(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Ordering(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<bivo_sim::SimError> for CliError {
    fn from(e: bivo_sim::SimError) -> Self {
        match e {
            bivo_sim::SimError::Planner(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<bivo_models::ModelError> for CliError {
    fn from(e: bivo_models::ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<bivo_nn::NnError> for CliError {
    fn from(e: bivo_nn::NnError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        match e {
            // A mode asked for a model nobody loaded: train ran too late or
            // not at all.
            PlannerError::MissingModel { .. } => CliError::Ordering(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<bivo_core::CoreError> for CliError {
    fn from(e: bivo_core::CoreError) -> Self {
        CliError::Data(e.to_string())
    }
}
