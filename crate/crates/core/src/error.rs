use thiserror::Error;

/// Errors produced by the segmentation optimizers and their supporting containers.
#[derive(Debug, Error)]
pub enum SegError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("degenerate mask: labeling is empty or covers the whole grid")]
    DegenerateMask,

    #[error("level-set evolution became unstable at iteration {iteration}: {detail}")]
    Unstable { iteration: usize, detail: String },

    #[error("non-finite energy: {0}")]
    NonFiniteEnergy(String),

    #[error("max_flow must be computed before querying cut sides")]
    FlowNotComputed,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SegError>;
