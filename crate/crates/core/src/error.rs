use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular Jacobian D2D1 L_d (det = {det:e})")]
    SingularJacobian { det: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("rollout failed at step {index}")]
    Rollout {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("velocity Hessian of the inverse modified Lagrangian is singular")]
    SingularVelocityHessian,

    #[error("Kepler Lagrangian evaluated at the origin")]
    KeplerSingularity,

    #[error("trajectory too short: {points} points, need at least {needed}")]
    TrajectoryTooShort { points: usize, needed: usize },

    #[error("index {index} outside valid range {lo}..={hi}")]
    BoundaryIndex { index: usize, lo: usize, hi: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures that originate in the nonlinear solver.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::SingularJacobian { .. } | Error::NewtonDiverged { .. } => true,
            Error::Rollout { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
