use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    IncompatibleShapes {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("shape {shape:?} needs {expected} values, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("range {start}..{end} exceeds axis length {len}")]
    InvalidRange { start: usize, end: usize, len: usize },
    #[error("tensors from different graphs cannot be combined")]
    GraphMismatch,
    #[error("tensor is not part of the output's graph")]
    NotInGraph,
    #[error("grad needs a scalar output or an explicit seed, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("higher-order gradients need the graph in record-higher-order mode")]
    HigherOrderDisabled,
    #[error("operation {0} has no second-order rule")]
    HigherOrderUnsupportedOp(&'static str),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
