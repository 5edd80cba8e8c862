use std::path::PathBuf;

use crate::bundle::Trace;
use crate::linalg::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("point is outside the domain: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadratic subproblem did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverStalled { iterations: usize, residual: f64 },

    #[error(
        "level set became empty at iteration {iteration}; the supplied optimal value is too small"
    )]
    LevelSetEmpty { iteration: usize, trace: Box<Trace> },

    #[error("operation requires an unconstrained region")]
    ConstrainedRegion,

    #[error("certificate transfer needs nu >= 2 * iota * rho (nu = {nu:.3e}, iota = {iota:.3e}, rho = {rho:.3e})")]
    TransferPrecondition { nu: f64, iota: f64, rho: f64 },

    #[error("oracle budget of {budget} calls exhausted; best value {best_f:.6e}")]
    BudgetExhausted {
        budget: u64,
        best_x: Point,
        best_f: f64,
    },

    #[error("iteration cap of {cap} reached in {stage}")]
    IterationCap { stage: &'static str, cap: usize },

    #[error("config {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
