use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain of {what}")]
    Domain { what: String, point: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid too small: {0}")]
    GridSize(String),

    #[error("Picard iteration did not converge after {iterations} iterations (last update {last_delta:e})")]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        ratios: Vec<f64>,
    },

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("negative density {value:e} below tolerance -{tol:e} at {location}")]
    Positivity {
        value: f64,
        tol: f64,
        location: String,
    },

    #[error("march failed on slab {index}: {reason}")]
    March { index: usize, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error in {file}: {msg}")]
    Parse { file: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
