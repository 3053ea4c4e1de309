use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid moment order {0}; orders below 1 are not supported")]
    InvalidOrder(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("brute force limited to {limit} atoms, got {found}")]
    TooLarge { limit: usize, found: usize },
    #[error("brute force needs equal support sizes, got {left} and {right}")]
    UnequalSupportSizes { left: usize, right: usize },
    #[error("gauge axiom ({axiom}) violated: {witness}")]
    AxiomViolation { axiom: char, witness: String },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("invalid horizon: start {start} must be below terminal time {end}")]
    InvalidHorizon { start: f64, end: f64 },
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },
    #[error("degenerate pair {index}: measures coincide")]
    DegeneratePair { index: usize },
    #[error("quadrature over {dims} dimensions exceeds the budget of {cap}")]
    QuadratureBudgetExceeded { dims: usize, cap: usize },
    #[error("time step {dt} violates the stability bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("state dimension n*d = {found} exceeds the grid cap {cap}")]
    DimensionCap { found: usize, cap: usize },
    #[error("support point outside the grid box of radius {radius}")]
    SupportOutsideGrid { radius: f64 },
    #[error("too many cells: {0}")]
    TooManyCells(u128),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
