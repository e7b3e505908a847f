use thiserror::Error;

/// Errors raised by mechanisms, samplers and estimators.
#[derive(Debug, Error)]
pub enum NdpError {
    #[error("invalid clamp bounds: lower {lo} must be strictly below upper {hi}")]
    InvalidBounds { lo: f64, hi: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid statistic: {0}")]
    InvalidStatistic(String),

    #[error("invalid clamp floor {0}: must lie strictly inside (0, 1)")]
    InvalidFloor(f64),

    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("support window of {needed} states exceeds the cap of {cap}; raise the cap")]
    WindowOverflow { needed: u64, cap: u64 },

    #[error("every mixture component has zero likelihood")]
    DegenerateLikelihood,

    #[error("numeric breakdown: {0}")]
    NumericBreakdown(String),

    #[error("invalid initial state: {0}")]
    InvalidInit(String),

    #[error("enumeration grid of {needed} states exceeds the cap of {cap}")]
    CapExceeded { needed: u64, cap: u64 },

    #[error("conditioning event too rare: acceptance rate {0:.3e} is below 1e-3; widen the set")]
    RectangleTooSmall(f64),
}

pub type Result<T> = std::result::Result<T, NdpError>;
