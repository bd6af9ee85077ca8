use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} out of range for grid shape {shape:?}")]
    Index { index: [usize; 3], shape: [usize; 3] },

    #[error("position ({x}, {y}) lies outside the grid")]
    OutOfDomain { x: f64, y: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("task {task} is infeasible: {reason}")]
    Infeasible { task: usize, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
