use thiserror::Error;

/// Errors produced by the readout toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {0:e})")]
    NonHermitian(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("trace {0} outside [0, 1]")]
    InvalidTrace(f64),

    #[error("state has zero trace")]
    ZeroTrace,

    #[error("state vector is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step too large: rate·dt = {0} exceeds 1")]
    StepTooLarge(f64),

    #[error("switching rates are equal")]
    DegenerateRates,

    #[error("a switching rate is zero")]
    ZeroRate,

    #[error("outside the validity regime: {0}")]
    WrongRegime(String),

    #[error("outcome has zero probability")]
    ZeroOutcomeProbability,

    #[error("adaptive quadrature did not reach tolerance {tolerance:e} (estimate {estimate:e})")]
    QuadratureFailure { tolerance: f64, estimate: f64 },

    #[error("objective is flat in the pulse duration")]
    FlatObjective,

    #[error("survival-function inversion failed: {0}")]
    BisectionFailure(String),

    #[error("not enough counts for a chi-squared test: {0}")]
    InsufficientCounts(String),

    #[error("parameters are not identifiable: {0:?}")]
    NotIdentifiable(Vec<String>),

    #[error("no fit start converged (best deviance {best_deviance})")]
    NoConvergence { best_deviance: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("Bloch vector length² {0} exceeds 1")]
    UnphysicalBloch(f64),

    #[error("malformed histogram: {0}")]
    Histogram(String),
}

pub type Result<T> = std::result::Result<T, Error>;
