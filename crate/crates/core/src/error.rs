use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("track `{agent}` has {len} frames, at least {min} required")]
    TooShort { agent: String, len: usize, min: usize },

    #[error("invalid track `{agent}`: {reason}")]
    InvalidTrack { agent: String, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    #[error("integration diverged at step {step} while scanning frame t={frame_t} ({ego} vs {other})")]
    ScenarioDiverged { step: usize, frame_t: f64, ego: String, other: String },

    #[error("unknown group {0}")]
    UnknownGroup(usize),

    #[error("site regions {a} and {b} overlap")]
    OverlappingRegions { a: usize, b: usize },

    #[error("model specification error: {0}")]
    Spec(String),

    #[error("non-finite initial log-posterior: {0}")]
    Initialization(String),

    #[error("at least 2 chains required, got {0}")]
    InsufficientChains(usize),

    #[error("AUC undefined: labels contain a single class")]
    UndefinedAuc,
}
