use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("negative timestamp {time} at row {line}")]
    NegativeTime { line: usize, time: f64 },

    #[error("row {line}: expected {expected} edge features, found {found}")]
    FeatureLength {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("node {node} appears on both sides of the bipartite graph")]
    BipartiteViolation { node: u64 },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("node id {node} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange { node: usize, num_nodes: usize },

    #[error("self-loop on node {0} rejected")]
    SelfLoop(usize),

    #[error("nodes {u} and {v} are on the same side of the bipartite graph")]
    SameSide { u: usize, v: usize },

    #[error("operation requires a {expected} registry")]
    WrongMode { expected: &'static str },

    #[error("registry consistency violated: {0}")]
    Consistency(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("no valid negative candidates for node {0}")]
    NoCandidates(usize),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
