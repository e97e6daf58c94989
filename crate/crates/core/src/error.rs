use thiserror::Error;

use crate::topology::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("numerical domain error: {0}")]
    Domain(String),

    #[error("objective is non-finite on the whole bracket [{lo}, {hi}]")]
    NonFiniteObjective { lo: f64, hi: f64 },

    #[error("series did not converge within {terms} terms (partial sum {partial})")]
    NonConvergence { partial: f64, terms: u64 },

    #[error("infeasible assignment: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing delay bound for link {transmitter} -> {receiver} (interferer {interferer:?}): {reason}")]
    MissingBound {
        transmitter: usize,
        receiver: usize,
        interferer: Option<usize>,
        reason: String,
    },

    #[error("search space of about {estimate:.3e} states exceeds the limit {limit:.3e}")]
    SearchSpaceTooLarge { estimate: f64, limit: f64 },

    #[error("model would have {variables} variables, above the cap of {cap}")]
    ModelTooLarge { variables: usize, cap: usize },

    #[error("malformed model file at line {line}: {message}")]
    ModelParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("cannot read scenario file: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("cannot write scenario file: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
