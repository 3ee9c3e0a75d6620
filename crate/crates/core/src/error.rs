//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("concept is empty after normalization: {0:?}")]
    EmptyConcept(String),

    #[error("self-loop triplet on concept {0:?}")]
    SelfLoop(String),

    #[error("unknown relation {0:?}")]
    UnknownRelation(String),

    #[error("unbound prompt slot {{{0}}}")]
    UnboundSlot(String),

    #[error("unknown template id {0:?}")]
    UnknownTemplate(String),

    #[error("no scripted rule matched prompt for template {template}")]
    ScriptMiss { template: String },

    #[error("backend {backend} failed: {reason}")]
    Backend { backend: String, reason: String },

    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("could not parse a decision from response {0:?}")]
    Unparseable(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("missing resource: {0}")]
    MissingResource(String),

    #[error("{stage}: {failed} of {total} per-seed calls failed, above threshold {threshold}")]
    FailureThreshold {
        stage: &'static str,
        failed: usize,
        total: usize,
        threshold: f64,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(
        path: impl Into<PathBuf>,
        line: usize,
        reason: impl Into<String>,
    ) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }
}
