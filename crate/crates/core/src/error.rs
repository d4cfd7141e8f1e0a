use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance too large for exact evaluation: {required} state-steps exceed cap {cap}")]
    InstanceTooLarge { required: usize, cap: usize },

    #[error("parameter overflow: non-finite logit {0}")]
    ParameterOverflow(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
}
