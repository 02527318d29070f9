use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PactError>;

#[derive(Debug, Error)]
pub enum PactError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unrecognized format: {0}")]
    UnrecognizedFormat(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("non-finite payload at element {0}")]
    NonFinitePayload(usize),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("empty token set")]
    EmptyTokenSet,

    #[error("invalid pruning percentage: {0} (expected 0 <= lambda <= 1)")]
    InvalidPruningPercentage(f64),

    #[error("rope requires even head dim (got {0})")]
    OddHeadDim(usize),

    #[error("undefined cosine distance: zero vector at index {0}")]
    UndefinedCosineDistance(usize),

    #[error("invalid cluster size {size} at position {index}")]
    InvalidClusterSize { index: usize, size: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
}

impl PactError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PactError::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by caller-supplied parameters rather than data.
    pub fn is_parameter_error(&self) -> bool {
        matches!(
            self,
            PactError::InvalidPruningPercentage(_) | PactError::InvalidParameter(_)
        )
    }
}
