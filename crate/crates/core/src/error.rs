use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("tail mass {target:e} unreachable below node cap {cap:e}")]
    TailUnreachable { target: f64, cap: f64 },

    #[error("quadrature normalization off by {defect:e} (tolerance {tol:e})")]
    Normalization { defect: f64, tol: f64 },

    #[error("support size {size} exceeds LP cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("total masses differ: {left} vs {right}")]
    MassMismatch { left: f64, right: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate grid: need at least {needed} steps, got {got}")]
    DegenerateGrid { needed: usize, got: usize },

    #[error("step size rejected: {0}")]
    StepSize(String),

    #[error("quadrature rule does not match evaluation point: {0}")]
    RuleMismatch(String),

    #[error("measure path is empty")]
    EmptyPath,

    #[error("Picard iteration did not converge after {iterations} sweeps (last distance {last:e})")]
    NonConvergence { iterations: usize, last: f64, trace: Vec<f64> },

    #[error("negative source weight {0}")]
    NegativeSource(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simplex failed: {0}")]
    Simplex(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
