use retail_impulse::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) => match e {
                CoreError::ConditionViolation { .. } => "condition",
                CoreError::CostTooLarge { .. }
                | CoreError::NoBracket { .. }
                | CoreError::NoConvergence { .. }
                | CoreError::InterventionCap { .. } => "solver",
                CoreError::InvalidParameter { .. }
                | CoreError::NotBaseModel { .. }
                | CoreError::Domain { .. }
                | CoreError::GridContainsBoundary { .. }
                | CoreError::InvalidConfig(_)
                | CoreError::MismatchedConfigs(_) => "config",
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.category() {
            "config" => 2,
            "solver" => 3,
            "condition" => 4,
            _ => 1,
        }
    }
}
