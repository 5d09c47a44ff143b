use thiserror::Error;

/// Errors raised by the eigenpath library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("operator is not a rank-1 orthogonal projector (deviation {deviation:.3e})")]
    NotProjector { deviation: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid density operator: {0}")]
    InvalidDensity(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("tracked level is degenerate at s = {s} (gap {gap:.3e})")]
    Degenerate { s: f64, gap: f64 },

    #[error("eigenstate tracking lost at s = {s} (best squared overlap {overlap:.3e})")]
    TrackingLost { s: f64, overlap: f64 },

    #[error("arc-length table did not converge (last increment {increment:.3e})")]
    Unconverged { increment: f64 },

    #[error("gap floor {floor} exceeds the sampled gap {gap} at s = {s}")]
    GapFloorViolated { s: f64, gap: f64, floor: f64 },

    #[error("transition matrix violates detailed balance (deviation {deviation:.3e})")]
    DetailedBalance { deviation: f64 },

    #[error("plan rejected: {0}")]
    PlanRejected(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Numerical failures (lost tracking, degenerate levels) as opposed to
    /// caller mistakes.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate { .. } | Error::TrackingLost { .. } | Error::Unconverged { .. }
        )
    }
}

impl Error {
    /// Planning failures: the requested guarantees cannot be met as asked.
    pub fn is_plan_rejection(&self) -> bool {
        matches!(self, Error::PlanRejected(_) | Error::GapFloorViolated { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
