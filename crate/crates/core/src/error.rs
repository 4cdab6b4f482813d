use thiserror::Error;

use crate::ou_process::OUHyperparams;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its domain (non-finite, negative, zero where
    /// strictly positive is required).
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// Caller violated an operation precondition (dimension mismatch, empty
    /// grid, unknown event, acting on a terminal state, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Cholesky factorization failed even with the maximum diagonal jitter.
    #[error("kernel matrix is not positive definite (last jitter tried: {jitter:e})")]
    Conditioning { jitter: f64 },

    /// The likelihood or its gradient became non-finite during optimization.
    #[error("non-finite objective during hyperparameter ascent: {message}")]
    Numerical {
        message: String,
        last_valid: OUHyperparams,
    },

    /// An estimator failure inside an experiment, tagged with the episode.
    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::ParameterDomain(msg.into())
    }
}
