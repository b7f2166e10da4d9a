use thiserror::Error;

/// Errors produced by the simulator and the bound calculator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("detection undefined: {0}")]
    DetectionUndefined(String),

    #[error("complexity guard: {0}")]
    ComplexityGuard(String),

    #[error("budget guard: estimated cost {estimated:.3e} exceeds limit {limit:.3e}")]
    BudgetExceeded { estimated: f64, limit: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
