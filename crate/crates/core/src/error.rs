use thiserror::Error;

use crate::network::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("node sets differ between snapshots ({left} vs {right} nodes, or mismatched ids)")]
    MismatchedNodes { left: usize, right: usize },

    #[error("no cluster heads given")]
    EmptyClusterHeads,

    #[error("node {node} is assigned to {target}, which is not a cluster head")]
    AssignmentToNonHead { node: NodeId, target: NodeId },

    #[error("node {0} is alive but has no assignment")]
    MissingAssignment(NodeId),

    #[error("no alive nodes to cluster")]
    NoAliveNodes,

    #[error("enumeration of C({candidates}, {k}) subsets exceeds the limit of {limit}")]
    CombinatorialLimit { candidates: usize, k: usize, limit: u64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension { context: &'static str, expected: usize, got: usize },

    #[error("non-finite loss {loss} at step {step} (batch of {batch}, max |output| {max_output:e})")]
    NonFiniteLoss { loss: f64, step: u64, batch: usize, max_output: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing {what} at {path}; run `leach-rlc {command}` first")]
    MissingArtifact { what: &'static str, path: String, command: &'static str },

    #[error("csv {path}:{line}: {reason}")]
    Csv { path: String, line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam { name, reason: reason.into() }
    }
}
