use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("i/o failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has no free cells")]
    NoFreeCells,

    #[error("cell ({x}, {y}) is blocked")]
    BlockedCell { x: usize, y: usize },

    #[error("cell index {index} is outside a {width}x{height} grid")]
    OutOfBounds {
        index: usize,
        width: usize,
        height: usize,
    },

    #[error("free cells ({x}, {y}) and ({to_x}, {to_y}) are not connected; prune to the largest component first")]
    Unreachable {
        x: usize,
        y: usize,
        to_x: usize,
        to_y: usize,
    },

    #[error("visibility graph is disconnected")]
    DisconnectedVisibilityGraph,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("field has no defined values")]
    EmptyField,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("could not satisfy plan constraints after {attempts} attempts: {reason}")]
    InfeasibleParams { attempts: u32, reason: String },

    #[error("duplicate record id {0:?}")]
    DuplicateIds(String),

    #[error("manifest {}: {message}", path.display())]
    ManifestIo { path: PathBuf, message: String },

    #[error("no completed tasks to summarise")]
    EmptyTaskList,

    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: io::Error,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("coordinator at {addr} unreachable after {attempts} attempts")]
    ConnectFailure { addr: String, attempts: u32 },

    #[error("missing {analysis} output for plan {plan_id}")]
    MissingField { plan_id: String, analysis: String },

    #[error("record {id}: {source}")]
    Record {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(id: impl Into<String>, source: Error) -> Self {
        Error::Record {
            id: id.into(),
            source: Box::new(source),
        }
    }
}
