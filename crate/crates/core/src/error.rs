use thiserror::Error;

/// Errors produced by grid construction, solvers, and verification routines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Grid construction rejected the requested resolution or extents.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// Two fields (or a field and a coefficient set) live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The coefficient set violates symmetry or uniform ellipticity.
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),

    /// An iterative linear solve did not reach the requested residual.
    #[error("linear solve failed: residual {residual:.3e} after {iterations} iterations")]
    SolveFailure { residual: f64, iterations: usize },

    /// Weight-family construction or validation failed.
    #[error("invalid weight family: {0}")]
    InvalidWeightFamily(String),

    /// A sign condition that admissible Carleman parameters guarantee was
    /// violated (indicates s > s* or a corrupted weight family).
    #[error("sign condition violated: {0}")]
    SignViolation(String),

    /// A constant fit or search found no admissible value; on a verified
    /// implementation this numerically falsifies the underlying estimate.
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// The requested operation is outside the supported scope.
    #[error("unsupported: {0}")]
    Unsupported(String),
}
