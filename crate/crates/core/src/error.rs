use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} is outside the domain [0, {domain})")]
    OutOfDomain { value: u64, domain: u64 },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("candidate {0} was not part of the aggregated candidate set")]
    UnknownCandidate(String),

    #[error("missing marginal estimate for subset mask {0:#b}")]
    MissingMarginal(u32),

    #[error("oracle is degenerate: keep and flip probabilities are equal")]
    DegenerateOracle,

    #[error("true and identified sets do not intersect")]
    EmptyIntersection,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
