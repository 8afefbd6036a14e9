use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("total spin must be a non-negative half-integer, got J = {0}")]
    InvalidSpin(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cat-state parameters (alpha = {alpha}, beta = {beta}) are a degenerate point of the family")]
    DegenerateCat { alpha: f64, beta: f64 },

    #[error("state dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "step control could not reach tolerance {tolerance:e}: error {error:e} at dtau = {dtau:e} after {halvings} halvings"
    )]
    StepUnderflow {
        dtau: f64,
        error: f64,
        tolerance: f64,
        halvings: usize,
    },

    #[error("fidelity trace has no interior local maximum")]
    NoLocalMax,

    #[error("basin hopping did not converge: best optimum moved by {moved:e} on the final hop")]
    NotConverged { moved: f64 },

    #[error("no scanned drive satisfies delta_max > {threshold_over_pi} pi")]
    Infeasible { threshold_over_pi: f64 },

    #[error("noise ensemble constraints not met after {batches} batches")]
    ResamplingCap { batches: usize },

    #[error("{failed} of {trials} noise trials failed (limit 5%)")]
    TooManyFailedTrials { failed: usize, trials: usize },

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("eigensolver failed: {0}")]
    Eigen(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical machinery itself, as opposed to
    /// invalid inputs or infeasible constraints.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. }
                | Error::NoLocalMax
                | Error::NotConverged { .. }
                | Error::ResamplingCap { .. }
                | Error::TooManyFailedTrials { .. }
                | Error::Eigen(_)
        )
    }
}
