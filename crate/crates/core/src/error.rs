//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by the library. Each variant names the precondition or
/// verification that did not hold; numeric payloads are the measured residuals.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("ambient dimensions differ ({left} vs {right})")]
    AmbientMismatch { left: usize, right: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("tuple is not a row contraction (excess {excess:.3e})")]
    NotRowContraction { excess: f64 },
    #[error("tuple is not commuting (commutator residual {residual:.3e})")]
    NotCommuting { residual: f64 },
    #[error("resolvent is numerically singular at the requested point (condition {condition:.3e})")]
    NearSingularResolvent { condition: f64 },
    #[error("multinomial coefficient overflows 128-bit integers")]
    Overflow,
    #[error("degree undetermined: nonzero coefficients reach the horizon {horizon}")]
    DegreeUndetermined { horizon: usize },
    #[error("tuple is not regular: {0}")]
    NotRegular(String),
    #[error("coefficient of length {length} touches the truncation band (order {order})")]
    BandCorrupted { length: usize, order: usize },
    #[error("tuple is not upper triangular for the split (lower block {residual:.3e})")]
    NotUpperTriangular { residual: f64 },
    #[error("corner reconstruction failed (residual {residual:.3e})")]
    ReconstructionFailed { residual: f64 },
    #[error("operator is not a contraction (norm {norm:.6})")]
    NotContraction { norm: f64 },
    #[error("connector construction failed: {0}")]
    ConnectorSearchFailed(String),
    #[error("hypothesis unmet: {0}")]
    HypothesisUnmet(String),
    #[error("fixture generation failed: {0}")]
    GenerationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
