use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("graph has no items")]
    EmptyGraph,

    #[error("operation requires a {expected} graph, got {actual}")]
    Stage {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("no known items: at least one item must keep its features")]
    NoKnownItems,

    #[error("no missing items to evaluate")]
    NoMissingItems,

    #[error("no user has test interactions")]
    NoTestUsers,

    #[error("invalid feature set: {0}")]
    Features(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: truncated payload, expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sweep cell (method={method}, rate={rate}, seed={seed}) failed: {source}")]
    Cell {
        method: String,
        rate: f64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization: {0}")]
    Serialize(String),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, used for CLI error lines and FFI status codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parameter { .. } => "parameter",
            Error::Shape(_) => "shape",
            Error::EmptyGraph => "empty-graph",
            Error::Stage { .. } => "stage",
            Error::NoKnownItems => "no-known-items",
            Error::NoMissingItems => "no-missing-items",
            Error::NoTestUsers => "no-test-users",
            Error::Features(_) => "features",
            Error::Parse { .. } => "parse",
            Error::Format { .. } | Error::Truncated { .. } => "format",
            Error::Io { .. } => "io",
            Error::Cell { source, .. } => source.category(),
            Error::Serialize(_) => "serialize",
        }
    }
}
