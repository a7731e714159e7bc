use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("polyhedron is empty")]
    EmptyPolyhedron,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("intractable instance: {pieces} pieces exceed the cap of {cap}")]
    Intractable { pieces: usize, cap: usize },

    #[error("rotation needs d > T, got d = {d}, T = {queries}")]
    RotationDimension { d: usize, queries: usize },

    #[error("transcript phase violation: {0}")]
    Phase(String),

    #[error("adversary is out of queries (limit {0})")]
    QueryBudget(usize),

    #[error("replay diverged at query {index}")]
    ReplayDivergence { index: usize },

    #[error("materialized function is inconsistent with the transcript at query {index}")]
    InconsistentGerm { index: usize },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
