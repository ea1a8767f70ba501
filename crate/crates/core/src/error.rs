use thiserror::Error;

/// Errors raised across the detection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("no mean increase: eta = {eta} must exceed the pre-change mean {mean}")]
    NoMeanIncrease { eta: f64, mean: f64 },

    #[error("infeasible tilt: eta = {eta} is not below the support supremum {sup}")]
    InfeasibleTilt { eta: f64, sup: f64 },

    #[error("{value} lies outside the support [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("solver failed: {message} (residual {residual:e})")]
    Solver { message: String, residual: f64 },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("missing column `{0}`")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate baseline: sample variance is zero over the window")]
    DegenerateBaseline,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
