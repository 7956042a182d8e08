use thiserror::Error;

/// Errors raised while building models, factoring covariances or running checks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("block B_{block} is rank deficient (smallest singular value {smallest:e}, tolerance {tolerance:e})")]
    RankDeficient {
        block: usize,
        smallest: f64,
        tolerance: f64,
    },

    #[error("block dimensions must be nonincreasing, got {0:?}")]
    NotMonotone(Vec<usize>),

    #[error("A0 is not positive definite (smallest eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    NotPositive {
        min_eigenvalue: f64,
        tolerance: f64,
    },

    #[error("{0}")]
    NotSymmetric(String),

    #[error("dilation parameter must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index}, threshold {threshold:e})")]
    NotPositiveDefinite {
        index: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("polynomial degree {0} exceeds the moment-expansion cap of 6")]
    DegreeTooHigh(usize),

    #[error("bad test-function parameters: {0}")]
    BadParams(String),

    #[error("test function has no analytic gradient")]
    MissingGradient,

    #[error("bad alpha: {0}")]
    BadAlpha(String),

    #[error("test function is not positive: {0}")]
    FunctionNotPositive(String),

    #[error("sampled value {value} exceeds the declared bound {bound}")]
    BoundViolated { value: f64, bound: f64 },

    #[error("bad argument: {0}")]
    BadArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
