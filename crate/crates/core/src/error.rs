use std::path::PathBuf;

/// Failures reported by the library. Numerical gates carry the measured
/// quantity so callers can tell a marginal miss from a broken input.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symplectic (residual {residual:.3e})")]
    NotSymplectic { residual: f64 },

    #[error("matrix is not symmetric (residual {residual:.3e})")]
    NotSymmetric { residual: f64 },

    #[error("condition number {condition:.3e} exceeds the accepted limit {limit:.1e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("polar decomposition failed to reach tolerance (residual {residual:.3e})")]
    PolarNotConverged { residual: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("degenerate fixed point: |det S| = {det:.3e}")]
    DegenerateFixedPoint { det: f64 },

    #[error("Gram gate failed: ‖G − I‖ = {residual:.3e} > {tolerance:.1e}")]
    GramGate { residual: f64, tolerance: f64 },

    #[error("quadrature cannot resolve the pullback: ‖A‖ = {norm:.3e} too large for truncation N = {truncation}")]
    QuadratureOverflow { norm: f64, truncation: usize },

    #[error("truncation tail {estimate:.3e} exceeds {tolerance:.1e}")]
    TailGate { estimate: f64, tolerance: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(
        "finite-difference step too large: halving changed the value by {relative_change:.3e}"
    )]
    StepTooLarge { relative_change: f64 },

    #[error("ill-conditioned fit (R² = {r2:.4})")]
    IllConditionedFit { r2: f64 },

    #[error("neither substitution variant satisfies the reduction (residuals {with_a:.3e}, {with_at:.3e})")]
    ReductionFailed { with_a: f64, with_at: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
