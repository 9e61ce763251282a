use thiserror::Error;

/// Errors produced by synthesis, analysis and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("no stabilizing solution: {0}")]
    NoStabilizingSolution(String),

    #[error("matrix is not Hurwitz: {0}")]
    NotHurwitz(String),

    #[error("weight vector is not unit norm (|mu| = {0})")]
    NotUnitNorm(f64),

    #[error("mass {index} is numerically zero ({value:e})")]
    ZeroMass { index: usize, value: f64 },

    #[error("pair is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("matrix does not have orthonormal columns: {0}")]
    NotOrthonormal(String),

    #[error("DC gain is singular; cannot form feedforward")]
    SingularDcGain,

    #[error("weight {index} must be strictly positive (got {value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("problem too large: size {size} exceeds cap {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("closed loop is unstable: {0}")]
    UnstableClosedLoop(String),

    #[error("weight filter realization is not minimal: {0}")]
    NotMinimalWeight(String),

    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
