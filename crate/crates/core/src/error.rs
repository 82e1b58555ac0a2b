use thiserror::Error;

/// Errors raised by the numerical engines and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("{censored} of {replicates} replicates censored at horizon {cap}; raise the horizon cap")]
    Censored { censored: u64, replicates: u64, cap: u64 },

    #[error("no replicates survived the conditioning event ({replicates} simulated)")]
    NoneKept { replicates: u64 },

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
