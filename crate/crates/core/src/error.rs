use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeconvError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("sample too small: need at least {required} observations, got {actual}")]
    SampleTooSmall { required: usize, actual: usize },

    #[error("index {0} out of range (indices start at 1)")]
    ZeroIndex(usize),

    #[error("point {x} lies outside the evaluation grid [{lo}, {hi}]")]
    OutsideGrid { x: f64, lo: f64, hi: f64 },

    #[error("no grid point has a reference value above the threshold {0}")]
    EmptyMetricSupport(f64),

    #[error("estimated functional {name} is not positive ({value}); no bandwidth can be formed")]
    NonPositiveFunctional { name: &'static str, value: f64 },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

pub type Result<T> = std::result::Result<T, DeconvError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> DeconvError {
    DeconvError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
