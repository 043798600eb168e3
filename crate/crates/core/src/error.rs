//! Error taxonomy shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed us something that violates a precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// Cached state (forward activations, checkpoint payloads) does not match.
    #[error("internal state: {0}")]
    InternalState(String),

    /// A gradient or parameter went NaN/Inf; `path` names the offending tensor.
    #[error("non-finite value at {path}: {detail}")]
    NonFinite { path: String, detail: String },

    /// A fairness metric was requested on an empty group or group-label cell.
    #[error("metric undefined: cell {cell} is empty")]
    MetricUndefined { cell: String },

    /// A minibatch is missing a cell the active adversarial objective needs.
    #[error("group starvation: cell {cell} missing from batch")]
    GroupStarvation { cell: String },

    /// Checkpoint selection could not produce a winner.
    #[error("model selection failed: {0}")]
    Selection(String),

    /// An enumeration oracle found an inequality the theory says cannot fail.
    #[error("theorem violation: {0}")]
    TheoremViolation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Short machine-readable kind tag used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::RejectedInput(_) => "rejected-input",
            Error::InternalState(_) => "internal-state",
            Error::NonFinite { .. } => "non-finite",
            Error::MetricUndefined { .. } => "metric-undefined",
            Error::GroupStarvation { .. } => "group-starvation",
            Error::Selection(_) => "selection-failed",
            Error::TheoremViolation(_) => "theorem-violation",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
        }
    }
}
