use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("series did not converge: {0}")]
    NonConvergence(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("delay argument {value} at t={t} falls below the history window start -{r}")]
    DelayOutOfRange { t: f64, value: f64, r: f64 },
    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },
    #[error("trajectories live on different grids")]
    GridMismatch,
}
