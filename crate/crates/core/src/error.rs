use std::path::PathBuf;

use pinnsformer_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("pseudo-sequence length must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("pseudo-sequence step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid mesh spec: {0}")]
    InvalidMeshSpec(String),
    #[error("no collocation points for the {0} term")]
    EmptyCollocation(&'static str),
    #[error("the {0} term has zero NTK trace")]
    ZeroTrace(&'static str),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("search direction is not a descent direction (slope {0})")]
    NotDescentDirection(f64),
    #[error("reference values sum to zero")]
    ZeroDenominator,
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
