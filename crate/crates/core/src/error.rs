use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different grids")]
    GridMismatch,

    #[error("{op} is not defined in dimension {dim}")]
    UnsupportedDimension { op: &'static str, dim: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field contains NaN or infinite values")]
    NonFinite,

    #[error("field is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("search direction vanishes")]
    DegenerateDirection,

    #[error("inner solver stopped after {iterations} iterations with relative residual {residual:e}")]
    InnerSolver { iterations: usize, residual: f64 },

    #[error("energy increased from {from} to {to} at iteration {iteration}")]
    Diverged { iteration: usize, from: f64, to: f64 },

    #[error("{path}: {message}")]
    Config { path: String, message: String },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
