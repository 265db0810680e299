use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid resolution {0} must be a power of two and at least 8")]
    InvalidResolution(usize),

    #[error("field has {actual} samples, grid of resolution {resolution} needs {expected}")]
    LengthMismatch {
        resolution: usize,
        expected: usize,
        actual: usize,
    },

    #[error("fields live on different grids ({left} vs {right})")]
    GridMismatch { left: usize, right: usize },

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("tree index must be at least 1")]
    InvalidTreeIndex,

    #[error("expected {expected} fields for a tree of depth {depth}, got {actual}")]
    TreeSize {
        depth: u32,
        expected: usize,
        actual: usize,
    },

    #[error("invalid direction set: {0}")]
    InvalidDirections(String),

    #[error("smoothing cannot reach eps = {eps:.3e} at resolution {resolution} (best {best:.3e} at l = {max_scale})")]
    SmoothingUnreachable {
        eps: f64,
        best: f64,
        max_scale: usize,
        resolution: usize,
    },

    #[error("node {node}: no admissible frequency inside sector {sector} within |xi|,|eta| <= {limit}")]
    FrequencyBudget {
        node: usize,
        sector: usize,
        limit: i64,
    },

    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("maximal half-plane operator disagrees with the sector route: relative L2 gap {gap:.3e} > {tol:.1e}")]
    DualPathMismatch { gap: f64, tol: f64 },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
