use thiserror::Error;

use crate::bayesopt::AdaptationStep;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("site {site} out of range for {num_sites} sites")]
    SiteOutOfRange { site: usize, num_sites: usize },

    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    #[error("no valid exchange move: {ones} of {num_sites} sites displaced")]
    NoValidMove { ones: usize, num_sites: usize },

    #[error("walk length {k} infeasible: at most {max} exchanges available")]
    InfeasibleWalk { k: usize, max: usize },

    #[error("acceptance ratio is NaN")]
    InvalidRatio,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trace too short: need at least {min} values, got {got}")]
    TraceTooShort { min: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("state space too large to enumerate: {size} states (limit {limit})")]
    StateSpaceTooLarge { size: u128, limit: u128 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("adaptation aborted after {} evaluations: {source}", history.len())]
    AdaptationAborted {
        history: Vec<AdaptationStep>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
