use std::fmt;

use thiserror::Error;

/// Errors raised by a model endpoint while scoring a batch.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transport failure during {phase}: {message}")]
    Transport { phase: &'static str, message: String },

    #[error("timed out after {millis} ms waiting for {phase}")]
    Timeout { phase: &'static str, millis: u128 },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("model returned a malformed score matrix: {0}")]
    BadScores(String),
}

impl ModelError {
    /// Transport-level failures are the only ones worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(self, ModelError::Transport { .. })
    }
}

/// Identifies the coalition whose evaluation failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionId {
    pub occurrence: Vec<usize>,
    pub order: Vec<usize>,
}

impl fmt::Display for CoalitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{:?} z{:?}", self.occurrence, self.order)
    }
}

#[derive(Debug, Error)]
pub enum OsvError {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("evaluation of coalition {coalition} failed: {source}")]
    Evaluation {
        coalition: CoalitionId,
        #[source]
        source: ModelError,
    },

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = OsvError> = std::result::Result<T, E>;

macro_rules! contract {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::OsvError::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use contract;
