use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge `{0}` has nonpositive or non-finite length {1}")]
    InvalidLength(String, f64),
    #[error("edge `{0}` is a self-loop on vertex `{1}`")]
    SelfLoop(String, String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{0}` references an empty vertex id")]
    DanglingVertex(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("unknown edge `{0}`")]
    UnknownEdge(String),
    #[error("event offset {offset} outside edge `{edge}` of length {length}")]
    OffsetOutOfRange { edge: String, offset: f64, length: f64 },
    #[error("event on edge `{0}` has a non-finite timestamp")]
    NonFiniteTimestamp(String),
    #[error("unsupported kernel `{0}`")]
    UnsupportedKernel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("basis/vector length mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("index was built for a different kernel layout than the query")]
    IndexMismatch,
    #[error("out-of-order insert: timestamp {got} precedes last inserted {last}")]
    OutOfOrder { last: i64, got: i64 },
    #[error("inconsistent batch: {0}")]
    InconsistentBatch(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("snapshot: {0}")]
    Snapshot(String),
}

impl Error {
    /// Usage/config problems map to exit code 1, data and I/O problems to 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsupportedKernel(_)
            | Error::InvalidParameter(_)
            | Error::InconsistentBatch(_)
            | Error::IndexMismatch => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
