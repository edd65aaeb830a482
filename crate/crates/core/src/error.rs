use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", format_violations(.0))]
    InvalidScenario(Vec<Violation>),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("queue is unstable (rho = {rho})")]
    Unstable { rho: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("safety margin epsilon = {eps} is inconsistent with rho = {rho}")]
    InconsistentMargin { rho: f64, eps: f64 },

    #[error("solver failure: {status} (primal residual {primal_residual:e}, dual residual {dual_residual:e})")]
    Solver {
        status: String,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("flow decomposition left residual {0:e}")]
    Rounding(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
