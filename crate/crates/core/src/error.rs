use thiserror::Error;

/// Errors raised by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be positive")]
    ZeroDimension,

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("weights must be strictly positive (index {index} has {value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("matrix is not skew-symmetric in the weighted inner product (deviation {deviation:e})")]
    NotSkew { deviation: f64 },

    #[error("eigen-decomposition failed: {reason} (residual {residual:e})")]
    EigenFailure { reason: String, residual: f64 },

    #[error("projection onto the zero vector is undefined")]
    DegenerateProjection,

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("singular implicit step at node {node} (pivot {pivot:e})")]
    StepSingularity { node: usize, pivot: f64 },

    #[error("series too short: need at least {needed} steps, got {found}")]
    SeriesTooShort { needed: usize, found: usize },

    #[error("autocorrelation has C(0) = 0; the kernel equation is degenerate")]
    DegenerateAcf,

    #[error("noise model is not realizable: {0}")]
    NonRealizable(String),

    #[error("covariance factorization failed at pivot {index} (value {value:e})")]
    Factorization { index: usize, value: f64 },

    #[error("embedding invalid: clipped {clipped_fraction:.3e} of the spectral mass")]
    InvalidEmbedding { clipped_fraction: f64 },

    #[error("estimator needs at least {needed} realizations, got {found}")]
    TooFewSamples { needed: usize, found: usize },

    #[error("not an orthogonal projection (deviation {deviation:e})")]
    NotProjection { deviation: f64 },

    #[error("vector is not in the fast subspace (slow component {component:e})")]
    NotInFastSubspace { component: f64 },

    #[error("observable has no analytic partial derivatives")]
    MissingPartials,

    #[error("quadrature overflow at node (q = {q}, p = {p})")]
    QuadratureOverflow { q: f64, p: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
