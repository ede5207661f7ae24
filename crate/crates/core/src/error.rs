use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "coefficient C[{i}][{h}][{k}] = {value} lies outside [0, 1]; \
         the money unit is too large for the class spacing"
    )]
    ModelParameter {
        i: usize,
        h: usize,
        k: usize,
        value: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("total income {mu} outside the open interval ({lo}, {hi})")]
    IncomeOutOfRange { mu: f64, lo: f64, hi: f64 },

    #[error("class {index} has non-positive population {value:e}")]
    PositivityViolation { index: usize, value: f64 },

    #[error("correction window of column {column} is degenerate (R^2 = N T)")]
    SingularLadder { column: usize },

    #[error("{0} is undefined for zero total income")]
    UndefinedIndex(&'static str),

    #[error("mobility undefined: poorest and richest classes hold the whole population ({0})")]
    DegeneratePopulation(f64),

    #[error("deterministic relaxation did not converge in {steps} steps (residual {residual:e})")]
    NotConverged { steps: usize, residual: f64 },

    #[error("positivity not restored within {steps} deterministic steps")]
    RecoveryFailed { steps: usize },

    #[error("drift step leaves the simplex even at dt = {dt:e}")]
    StepRejected { dt: f64 },

    #[error("correlation undefined: {0}")]
    DegenerateSeries(&'static str),

    #[error("only {completed} of {requested} realizations completed (first failure: {first})")]
    EnsembleFailed {
        completed: usize,
        requested: usize,
        first: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
