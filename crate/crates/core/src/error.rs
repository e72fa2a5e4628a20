use thiserror::Error;

use crate::model::NodeId;

/// A violated state invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid node table key {0:?}: node sections must be [nodes.<integer id>]")]
    BadNodeKey(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("unknown parameter path {0:?}")]
    UnknownParameter(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Runtime abort inside the dynamics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("non-finite {field} on node {node} at step {step}")]
    NonFinite {
        step: u64,
        node: NodeId,
        field: &'static str,
    },
    #[error("horizon {0} exceeds the step cap")]
    HorizonTooLong(u64),
}
