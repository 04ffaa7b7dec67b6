use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Backing file missing, truncated or otherwise inconsistent with its metadata.
    #[error("storage error: {0}")]
    Storage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("memory budget exceeded: requested {requested} bytes with {in_use} of {limit} bytes in use")]
    OverBudget {
        requested: u64,
        in_use: u64,
        limit: u64,
    },

    #[error("format error at line {line}: {msg}")]
    Format { line: u64, msg: String },

    #[error("self-loop on node {node} at line {line}")]
    SelfLoop { node: u64, line: u64 },

    #[error("integrity error at node {node}: {msg}")]
    Integrity { node: u64, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: u64, got: u64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("priority queue is empty")]
    EmptyQueue,

    #[error("message integrity error at node {node}: expected {expected} messages, popped {got}")]
    MessageIntegrity { node: u64, expected: u64, got: u64 },

    #[error("routing error: tuple for node {node} (sent from color {found}) found in bucket {bucket}")]
    Routing { node: u64, bucket: u64, found: u64 },

    #[error("forwarding chain broken at node {node}: no size triple for cluster {cluster}")]
    ForwardingChain { node: u64, cluster: u64 },

    #[error("infeasible partition: {0}")]
    Infeasible(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("coarsening stalled at {nodes} nodes ({bytes} resident bytes, threshold {threshold}); increase the memory budget")]
    Stalled { nodes: u64, bytes: u64, threshold: u64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed user input (as opposed to resources or configuration).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::SelfLoop { .. }
                | Error::Dimension { .. }
                | Error::Parameter(_)
                | Error::Integrity { .. }
                | Error::Unsupported(_)
        )
    }
}
