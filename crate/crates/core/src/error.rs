use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh is not closed ({open_edges} boundary or non-manifold edges); cross-section is unreliable")]
    OpenMesh { open_edges: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("design vector has {got} components, region expects {expected}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("design vector outside feasible region: {0}")]
    Infeasible(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel matrix is not positive definite after maximum jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("landmark outside influence region (all kernel weights underflow)")]
    OutsideInfluence,

    #[error("evaluator failed: {0}")]
    Evaluator(String),

    #[error("schema violation in {path}:\n{}", .problems.join("\n"))]
    Schema { path: String, problems: Vec<String> },

    #[error("parse error in {path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
