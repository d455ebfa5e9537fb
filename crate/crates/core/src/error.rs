use alloc::string::String;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("topology contains a directed cycle")]
    CyclicTopology,
    #[error("feedback matrix has spectral radius {0} >= 1; Neumann series diverges")]
    DivergentFeedback(f64),
    #[error("I - F is numerically singular (condition estimate {0:e})")]
    SingularIF(f64),
    #[error("coefficient {0} lies outside the topology's sparsity pattern")]
    SparsityViolation(String),
    #[error("unknown edge {0}")]
    UnknownEdge(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("input distribution has empty support")]
    EmptySupport,
    #[error("invalid input distribution: {0}")]
    InvalidDistribution(String),
    #[error("output density underflow (log p(z) = {0})")]
    DensityUnderflow(f64),
    #[error("system matrix is singular (condition estimate {0:e})")]
    SingularSystemMatrix(f64),
    #[error("product quadrature is limited to n_out <= 3 (got {0}); use Monte-Carlo")]
    QuadratureCostGuard(usize),
    #[error("Monte-Carlo estimation needs at least {min} samples (got {got})")]
    TooFewSamples { got: usize, min: usize },
    #[error("finite-difference step {0} outside [1e-5, 1e-2]")]
    StepOutOfRange(f64),
    #[error("finite-difference step {step} is below the Monte-Carlo noise floor (derivative standard error {std_err:e} vs scale {scale:e})")]
    NoiseFloor { step: f64, std_err: f64, scale: f64 },
    #[error("{0}")]
    InvalidCutTarget(String),
    #[error("missing coefficient {0}")]
    MissingCoefficient(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
