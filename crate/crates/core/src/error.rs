use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("crossing point lies {lateral:.3e} m off the agent's path")]
    OffPath { lateral: f64 },

    #[error("free speed is unbounded: k_dv must be positive")]
    UnboundedFreeSpeed,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("non-finite state for agent {agent} at step {step}")]
    NumericFault { step: usize, agent: usize },

    #[error("need at least {needed} outcomes, got {got}")]
    TooFewOutcomes { needed: usize, got: usize },

    #[error("parse error in {what}: {msg}")]
    Parse { what: String, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub fn parse(what: impl Into<String>, msg: impl ToString) -> Self {
        SimError::Parse {
            what: what.into(),
            msg: msg.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::OffPath { .. } => "off_path",
            SimError::UnboundedFreeSpeed => "unbounded_free_speed",
            SimError::Config(_) => "config",
            SimError::UnknownKeys(_) => "unknown_keys",
            SimError::NumericFault { .. } => "numeric_fault",
            SimError::TooFewOutcomes { .. } => "too_few_outcomes",
            SimError::Parse { .. } => "parse",
            SimError::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
