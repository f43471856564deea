use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value from {0}")]
    NonFinite(&'static str),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("optimizer did not converge (gap {gap:.3e} after {iterations} iterations)")]
    NonConvergence { gap: f64, iterations: usize },

    #[error("point is outside the hull [A,B]; psi is -inf there")]
    OutsideHull,

    #[error("supergradient verification failed at x (worst violation {worst:.3e})")]
    SupergradientCheck { worst: f64 },

    #[error("no epsilon-attaining point found for the sup-convolution")]
    NoAttainingPoint,

    #[error("function value is +inf at the requested point")]
    OutsideDomain,

    #[error("inconsistent problem: {0}")]
    InconsistentProblem(String),

    #[error("descent stagnated: {0}")]
    Stagnation(String),

    #[error("no fuzzy pair below threshold (best residual {best:.3e}, threshold {threshold:.3e})")]
    FuzzyPair { best: f64, threshold: f64 },

    #[error("schedule exhausted without a valid certificate:\n{0}")]
    NoCertificate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
