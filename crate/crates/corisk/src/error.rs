use std::path::Path;

use corisk_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Pipeline failure, classified by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }

    /// An upstream artifact is missing; names the stage that produces it.
    pub fn missing(path: &Path, stage: &str) -> Self {
        CliError::Data(format!("{} not found; run `corisk {stage}` first", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::InvalidConfig(_)
            | CoreError::InvalidParameter(_)
            | CoreError::Spec(_)
            | CoreError::OverlappingRegions { .. } => CliError::Config(msg),
            CoreError::TooShort { .. } | CoreError::InvalidTrack { .. } | CoreError::UnknownGroup(_) => {
                CliError::Data(msg)
            }
            CoreError::IntegrationDiverged { .. }
            | CoreError::ScenarioDiverged { .. }
            | CoreError::Initialization(_)
            | CoreError::InsufficientChains(_)
            | CoreError::UndefinedAuc => CliError::Numeric(msg),
        }
    }
}
