use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("function is not differentiable at {0:?}")]
    NonSmooth(Vec<f64>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error(
        "no interior fixed point: iterates drift to the simplex boundary (last price {price:?}, residual {residual:e})"
    )]
    BoundaryDrift { price: Vec<f64>, residual: f64 },

    #[error("degenerate economy: aggregate endowment of good {good} is zero")]
    Degenerate { good: usize },

    #[error("markov chain is reducible; closed classes: {classes:?}")]
    Reducible { classes: Vec<Vec<usize>> },

    #[error("solver failed at step {step} with reserves {reserves:?}: {source}")]
    Step {
        step: u64,
        reserves: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("exact subset search supports at most {cap} transactions, got {got}")]
    EnumerationCap { cap: usize, got: usize },

    #[error("reachable state space exceeds {cap} states")]
    StateCap { cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
