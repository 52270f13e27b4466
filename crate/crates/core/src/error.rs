use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("block id {index} out of range 1..={blocks}")]
    InvalidBlock { index: usize, blocks: usize },
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("duplicate point id {0}")]
    DuplicatePoint(String),
    #[error("smoothness constant must be positive, got {0}")]
    NonPositiveSmoothness(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("incompatible problem: {0}")]
    Incompatible(String),
    #[error("ensemble too large: {points} points exceeds cap {cap}")]
    CapExceeded { points: usize, cap: usize },
    #[error("solver failed with status {0}")]
    Solver(String),
    #[error("solution carries no dual multipliers")]
    MissingDuals,
    #[error("Gram block {block} is indefinite: eigenvalue {eigenvalue:e}")]
    IndefiniteGram { block: usize, eigenvalue: f64 },
    #[error("step size {alpha} outside (0, 1/L] with L = {lipschitz}")]
    StepOutOfRange { alpha: f64, lipschitz: f64 },
    #[error("non-finite oracle output at step {0}")]
    NonFinite(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
