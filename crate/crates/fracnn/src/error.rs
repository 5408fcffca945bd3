use thiserror::Error;

/// Errors raised by tensor operations, the update rule and training.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("zero element raised to negative power {exponent} with zero offset")]
    SingularPower { exponent: f64 },

    #[error("gamma argument {x} outside supported domain (0, 2]")]
    GammaDomain { x: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("backward pass requires a forward cache; call forward first")]
    MissingCache,

    #[error("invalid layer geometry: {0}")]
    InvalidGeometry(String),

    #[error("labels are not one-hot columns: {0}")]
    LabelsNotOneHot(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("dataset exhausted: step {step} needs {needed} samples but only {available} remain in the epoch schedule")]
    DatasetExhausted {
        step: usize,
        needed: usize,
        available: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
