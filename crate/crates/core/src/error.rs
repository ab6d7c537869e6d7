use thiserror::Error;

/// Errors raised anywhere in the calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("ODE solver failed at t = {t}: {reason}")]
    Solver { t: f64, reason: String },

    #[error("degenerate design: {0}")]
    Design(String),

    #[error("criterion could not be evaluated at node x = {node}: {reason}")]
    Criterion { node: f64, reason: String },

    #[error("optimization failed: {0}")]
    Opt(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("outside the model domain: {0}")]
    Domain(String),

    #[error("gradient of the derived quantity vanishes (norm {0:e})")]
    DegenerateGradient(f64),

    #[error("study failed: {0}")]
    Study(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
