use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("graph is not strongly connected")]
    NotStronglyConnected,

    #[error("no strongly connected graph after {attempts} attempts; parameters are too sparse")]
    ConnectivityRetriesExhausted { attempts: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),

    #[error("non-finite iterate at iteration {k}; step-size is likely too large")]
    NonFinite { k: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("eigenvector estimate of agent {agent} collapsed to {value:e}")]
    DegenerateEstimate { agent: usize, value: f64 },

    #[error("gradient-sum invariant violated at iteration {k}: relative error {error:e}")]
    InvariantViolated { k: usize, error: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
