use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("resolution {n} not divisible by 2^{depth_minus_one} for {levels} levels")]
    NotDivisible {
        n: usize,
        levels: usize,
        depth_minus_one: usize,
    },

    #[error("dense assembly cap exceeded: {dofs} DOFs > cap {cap}")]
    DenseCapExceeded { dofs: usize, cap: usize },

    #[error("zero diagonal at node {node}, component {component}: inactive DOF reached")]
    ZeroDiagonal { node: usize, component: usize },

    #[error("non-finite value encountered during {0}")]
    NonFinite(String),

    #[error("solver diverged: intermediate norm exceeded guard")]
    Diverged,

    #[error("no descent direction: all sensitivities are zero")]
    ZeroSensitivities,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
