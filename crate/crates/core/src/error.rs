use thiserror::Error;

use crate::ingest::srt::SrtError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures reported by a scorer backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// The caller asked for something the backend's contract does not cover
    /// (unknown entity, unknown relation, wrong feature shape).
    #[error("backend contract violation: {0}")]
    Contract(String),
    #[error("no recorded score for key {0}")]
    MissingKey(String),
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Srt(#[from] SrtError),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("frame scoring failed at frame {frame_index}: {source}")]
    FrameScoring {
        frame_index: usize,
        #[source]
        source: BackendError,
    },

    #[error("relation scoring failed for candidate {candidate} at frame rank {rank}: {source}")]
    RelationScoring {
        candidate: String,
        rank: usize,
        #[source]
        source: BackendError,
    },

    #[error("qa scoring failed at frame {frame_index}: {source}")]
    QaScoring {
        frame_index: usize,
        #[source]
        source: BackendError,
    },

    #[error("unanswerable query: {0}")]
    UnanswerableQuery(String),

    #[error("query {query_id} failed during {stage}: {source}")]
    Stage {
        query_id: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("generation error: {0}")]
    Generation(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, query_id: &str, stage: &'static str) -> Self {
        Error::Stage {
            query_id: query_id.to_string(),
            stage,
            source: Box::new(self),
        }
    }

    /// The backend error at the root of this failure, if any.
    pub fn backend_cause(&self) -> Option<&BackendError> {
        match self {
            Error::FrameScoring { source, .. }
            | Error::RelationScoring { source, .. }
            | Error::QaScoring { source, .. }
            | Error::Backend(source) => Some(source),
            Error::Stage { source, .. } => source.backend_cause(),
            _ => None,
        }
    }
}
