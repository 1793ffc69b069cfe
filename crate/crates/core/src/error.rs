use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The SR analysis only covers thresholds with `eta_r >= 1/q`.
    #[error("SR threshold {eta_r} is below 1/q = {bound} at q = {q}")]
    SrThresholdTooLow { eta_r: f64, q: f64, bound: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{what} = {value} exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("statistic value {x} outside [0, {upper})")]
    OutOfRange { x: f64, upper: f64 },

    #[error("conditioning starvation: only {kept} of {trials} runs survived to the change point")]
    ConditioningStarvation { kept: u64, trials: u64 },

    #[error("{censored} of {trials} runs hit the step cap of {cap}")]
    Censored { censored: u64, trials: u64, cap: u64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("oracle resolution too coarse: refinement moved values by {gap:e}")]
    ResolutionTooCoarse { gap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
