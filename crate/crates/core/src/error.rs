use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map one-to-one onto the failure modes of the public operations;
/// soft conditions (a norm refinement that stalls, a sample falling into a
/// smoothing window) are reported through flags on the result types instead.
#[derive(Debug, Error)]
pub enum CjError {
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("search budget exceeded: {0}")]
    SearchBudgetExceeded(String),

    #[error("infeasible generator geometry: {0}")]
    GeometryInfeasible(String),

    #[error("big-integer budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("delta schedule infeasible: {0}")]
    ScheduleInfeasible(String),

    #[error("cyclic lift requires a fixed point at 0: {0}")]
    NoFixedPointLift(String),

    #[error("component count exceeds budget: {0}")]
    ComponentExplosion(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trace format mismatch: {0}")]
    TraceFormat(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CjError>;
