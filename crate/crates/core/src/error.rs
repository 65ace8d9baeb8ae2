use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no edges")]
    NoEdges,
    #[error("probability out of range: {0}")]
    ProbabilityOutOfRange(f64),
    #[error("duplicate edge {src} -> {dst}")]
    DuplicateEdge { src: String, dst: String },
    #[error("self-loop on node {0}")]
    SelfLoop(String),
    #[error("node id {id} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { id: usize, node_count: usize },
    #[error("unknown node label {0:?}")]
    UnknownLabel(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("empty seed set")]
    EmptySeedSet,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("edge count {edges} exceeds the enumeration limit of {limit}")]
    TooManyEdges { edges: usize, limit: usize },
    #[error("history is not monotone at node {node}: delta {delta}")]
    NonMonotoneHistory { node: usize, delta: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("zero variance input")]
    ZeroVariance,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
