use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid particles: {0}")]
    InvalidParticles(String),
    #[error("empty support")]
    EmptySupport,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite or negative cost {value} at pair ({row}, {col})")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("metric error at pair ({row}, {col}): {reason}")]
    Metric { row: usize, col: usize, reason: String },
    #[error("instance of {entries} plan entries exceeds the exact solver cap of {cap}")]
    TooLarge { entries: usize, cap: usize },
    #[error("interpolation factor {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("invalid Sinkhorn configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "Gibbs kernel underflow at epsilon = {epsilon}; rescale the costs or raise epsilon \
         (or enable the log-domain fallback)"
    )]
    KernelUnderflow { epsilon: f64 },
    #[error("mixed distribution kinds: {0}")]
    MixedKinds(String),
    #[error("exact solver stalled after {0} pivots")]
    LpStalled(usize),
}
