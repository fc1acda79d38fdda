use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    CovarianceNotSymmetric { max_asymmetry: f64 },

    #[error("covariance matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e} <= 0)")]
    CovarianceNotPositiveDefinite { min_eigenvalue: f64 },

    #[error("mixture weights must sum to 1 within 1e-12 (sum = {sum})")]
    WeightsNotNormalized { sum: f64 },

    #[error("mixture weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },

    #[error("scale parameter {index} must be positive (got {value})")]
    NonPositiveScale { index: usize, value: f64 },

    #[error("bandwidth must be positive (got {0})")]
    NonPositiveBandwidth(f64),

    #[error("kernel density estimate requires at least one point")]
    EmptyPointSet,

    #[error("mixture path parameter must lie in [0, 1] (got {0})")]
    PathParameterOutOfRange(f64),

    #[error("path grid must be strictly increasing")]
    PathGridNotIncreasing,

    #[error("blend weight must lie in [0, 1] (got {0})")]
    BlendWeightOutOfRange(f64),

    #[error("blend base must be a kernel-based scoring rule (got {kind})")]
    BlendBaseNotKernelBased { kind: &'static str },

    #[error("{family} has no exact sampler; use the quadrature engine instead")]
    SamplerUnavailable { family: &'static str },

    #[error("tensor-product quadrature supports dim <= 2 (got {dim}); use the Monte Carlo engine")]
    QuadratureDimensionTooHigh { dim: usize },

    #[error("{what} is not finite at point {point}")]
    NonFiniteValue { what: String, point: String },

    #[error("expectation engine failed: {detail}")]
    EngineFailure { detail: String },

    #[error("cross-validation requires at least {need} samples (got {got})")]
    TooFewSamples { got: usize, need: usize },

    #[error("bandwidth grid must be nonempty and sorted ascending")]
    InvalidBandwidthGrid,

    #[error("sample file line {line}: {detail}")]
    SampleFileFormat { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
