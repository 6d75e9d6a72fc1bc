use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative probability mass {value} at index {index}")]
    NegativeMass { index: usize, value: f64 },

    #[error("distribution does not sum to 1 (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coordinate sets overlap at coordinate {0}")]
    CoordOverlap(usize),

    #[error("coordinate {coord} out of range for a source with {dims} coordinates")]
    CoordOutOfRange { coord: usize, dims: usize },

    #[error("distortion budget is negative ({0})")]
    BudgetNegative(f64),

    #[error("invalid distortion measure: {0}")]
    InvalidDistortion(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no feasible point found after {restarts} restarts")]
    NonConvergence { restarts: usize },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("sequence length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, Error>;
