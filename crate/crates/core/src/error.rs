use thiserror::Error;

/// Every failure the arena can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| exceeds tolerance")]
    NotSymmetric { i: usize, j: usize },
    #[error("rank-one downdate makes the matrix singular (1 - u'A^-1 u = {denominator})")]
    SingularDowndate { denominator: f64 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("not a probability vector: {0}")]
    InvalidDistribution(String),
    #[error("invalid counts: {successes} successes out of {trials} trials at level {level}")]
    InvalidCounts {
        successes: u64,
        trials: u64,
        level: f64,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("forget set of size {size} is not a proper subset of {train} training examples")]
    ForgetTooLarge { size: usize, train: usize },
    #[error("class {0} has no training examples")]
    EmptyClass(usize),
    #[error("dataset is empty")]
    EmptyData,
    #[error("gram matrix is degenerate: {rows} rows for {cols} columns with zero ridge")]
    DegenerateGram { rows: usize, cols: usize },
    #[error("unknown example id {0}")]
    UnknownId(u64),
    #[error("training transcript does not reproduce the model parameters")]
    TranscriptMismatch,
    #[error("method requires a parametric scheme, got {0}")]
    NotParametric(String),
    #[error("method requires a convex scheme, got {0}")]
    NotConvexScheme(String),
    #[error("forget set is empty")]
    EmptyForget,
    #[error("method {method} is not applicable: {reason}")]
    Unsupported { method: String, reason: String },
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: u64 },
    #[error("population of {available} examples cannot support {needed}")]
    InsufficientPopulation { available: usize, needed: usize },
    #[error("every trial aborted; first reason: {0}")]
    AllTrialsAborted(String),
    #[error("serialization failed: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
