use std::fmt;

use crate::blockla::BlockVec;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchurBlock {
    Yy,
    Complement,
}

impl fmt::Display for SchurBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchurBlock::Yy => write!(f, "yy block"),
            SchurBlock::Complement => write!(f, "Schur complement"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular matrix (zero pivot at {pivot})")]
    Singular { pivot: usize },
    #[error("singular {block} (zero pivot at {pivot})")]
    SingularBlock { block: SchurBlock, pivot: usize },
    #[error("linear solve failed at t = {t:e}: {source}")]
    SolveAt {
        t: f64,
        state: Box<BlockVec>,
        #[source]
        source: Box<Error>,
    },
    #[error("Newton iteration did not converge at t = {t:e} after {iterations} iterations (scaled residuals {history:?})")]
    NewtonDiverged { t: f64, iterations: usize, history: Vec<f64>, state: Box<BlockVec> },
    #[error("final time {t_final:e} is not a multiple of dt = {dt:e}")]
    IncommensurateTime { t_final: f64, dt: f64 },
    #[error("trajectory has {states} states but {expected} were expected")]
    Trajectory { states: usize, expected: usize },
    #[error("inverse of state transform did not converge for {state:?}")]
    TransformInverse { state: Box<BlockVec> },
    #[error("dimension {dim} exceeds the dense Christoffel limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("projection failed at component {component}: {reason}")]
    Projection { component: usize, reason: String },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the nonlinear or linear solvers.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::SingularBlock { .. }
                | Error::SolveAt { .. }
                | Error::NewtonDiverged { .. }
                | Error::TransformInverse { .. }
                | Error::Projection { .. }
                | Error::NonFinite(_)
        )
    }
}
