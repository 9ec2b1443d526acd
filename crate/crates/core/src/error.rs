use thiserror::Error;

/// Errors raised by the analytic solvers, the simulators and the CLI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpaError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("moment order m + n = {order} exceeds the configured cap {cap}")]
    OrderTooLarge { order: u32, cap: u32 },

    #[error("degenerate differential operator: {0}")]
    DegenerateOperator(String),

    /// Internal consistency failure; signals a solver bug rather than bad input.
    #[error("bound violation: {value} not in [{lower}, {upper})")]
    BoundViolation { value: f64, lower: f64, upper: f64 },

    #[error("step h = {h} exceeds the maximum {max}")]
    StepTooLarge { h: f64, max: f64 },

    #[error("polynomial power {power} exceeds the cap {cap}")]
    PowerCap { power: u32, cap: u32 },
}

impl FpaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FpaError::InvalidParams(msg.into())
    }

    /// True for failures caused by inconsistent internal state rather than user input.
    pub fn is_internal(&self) -> bool {
        matches!(self, FpaError::BoundViolation { .. })
    }
}

pub type Result<T> = std::result::Result<T, FpaError>;
