use thiserror::Error;

use crate::network::{LinkId, NodeId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid config key `{key}`: {msg}")]
    ConfigKey { key: String, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown link {0}")]
    UnknownLink(LinkId),

    #[error("no path from node {from} to node {to}")]
    NoPath { from: NodeId, to: NodeId },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("internal consistency violation: {0}")]
    Consistency(String),

    #[error("log integrity: {0}")]
    Integrity(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
