//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands: {0}")]
    GridMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate metric at grid point {point:?}: min eigenvalue {min_eig:.3e}")]
    DegenerateMetric { point: Vec<usize>, min_eig: f64 },

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("inconclusive fit: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    InconclusiveFit { residual: f64, tol: f64 },

    #[error("iteration left the contraction ball: norm {norm:.3e} > mu {mu:.3e}")]
    BallExit { norm: f64, mu: f64 },

    #[error("pull-back map is not invertible: min Jacobian determinant {0:.3e}")]
    NonInvertibleMap(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("snapshot format error: {0}")]
    SnapshotFormat(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
