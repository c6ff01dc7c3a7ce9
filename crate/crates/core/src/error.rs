use thiserror::Error;

pub type Result<T, E = CoadError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoadError {
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("degenerate rates: {0}")]
    DegenerateRates(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("predictions are not categorical at index {index}")]
    NotCategorical { index: usize },
    #[error("no threshold pair satisfies mu_s, mu_q <= 0.5")]
    NoFeasiblePair,
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("no flip: {0}")]
    NoFlip(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}
