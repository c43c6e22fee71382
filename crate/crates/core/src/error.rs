use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("cell {cell} has non-positive signed area {area:e}")]
    DegenerateCell { cell: usize, area: f64 },

    #[error("field has {actual} coefficients, expected {expected}")]
    FieldLength { expected: usize, actual: usize },

    #[error("non-finite coefficient at index {0}")]
    NonFinite(usize),

    #[error("non-positive diffusion weight {value:e} in cell {cell}")]
    NonPositiveWeight { cell: usize, value: f64 },

    #[error("factorization failed: zero or tiny pivot at row {row}")]
    Factorization { row: usize },

    #[error("iterative solver stopped after {iterations} iterations with relative residual {residual:e}")]
    IterativeSolver { iterations: usize, residual: f64 },

    #[error("Newton solver did not converge after {iterations} iterations (residual {residual:e}): {reason}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("mask is not strictly positive at interior vertex {vertex} (value {value:e})")]
    MaskNotPositive { vertex: usize, value: f64 },

    #[error("missing boundary value for dof {0}")]
    MissingBoundaryValue(usize),

    #[error("unknown boundary tag {0:?}")]
    UnknownTag(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
