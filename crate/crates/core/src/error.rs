use thiserror::Error;

/// Errors raised by model construction, kernel solving and closed-loop runs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("kernel solver failed after {iterations} iterations (last update {last_update:.3e}); residual history: {history:?}")]
    Solver {
        iterations: usize,
        last_update: f64,
        history: Vec<f64>,
    },

    #[error("composition residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Composition { residual: f64, tolerance: f64 },

    #[error("simulation left the admissible region at x = {x:.4} km, t = {t:.6} h: {reason}")]
    Simulation { x: f64, t: f64, reason: String },

    #[error("invariant violated at t = {t:.6} h: {what}")]
    Invariant { t: f64, what: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
