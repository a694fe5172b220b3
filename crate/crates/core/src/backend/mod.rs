//! The scoring boundary. Everything that needs a pretrained vision-language
//! model (frame relevance, relation affinity, multiple-choice scoring) goes
//! through [`ScorerBackend`]; the engine only ever sees numbers in `[0, 1]`.

mod file;
mod mock;
mod remote;

pub use file::{FileBackend, MissingKeyPolicy, RecordingBackend, ScoreKey, ScoreOp, ScoreRecord};
pub use mock::{MockBackend, MockEdge, MockQaEntry, MockTruth};
pub use remote::{HealthStatus, RemoteBackend, RemoteConfig};

use serde::Serialize;

use crate::error::BackendError;
use crate::feature::FeatureVector;
use crate::ingest::AnchorEntity;

/// Prompt sent with every frame-relevance request.
pub const FRAME_PROMPT: &str = "Does the frame contain this entity?";
/// Prompt sent with every relation-affinity request.
pub const RELATION_PROMPT: &str =
    "Do other entities in the frame have this relation with this entity?";

/// Tolerance for scores that stray outside `[0, 1]` by rounding only.
pub(crate) const SCORE_SLACK: f64 = 1e-9;

/// Entity identity as it appears in backend requests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityRef<'a> {
    pub id: &'a str,
    pub name: &'a str,
    #[serde(rename = "type")]
    pub entity_type: &'a str,
}

impl<'a> From<&'a AnchorEntity> for EntityRef<'a> {
    fn from(e: &'a AnchorEntity) -> Self {
        EntityRef {
            id: &e.entity_id,
            name: &e.name,
            entity_type: &e.entity_type,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameRequest<'a> {
    pub frame_index: usize,
    pub feature: &'a FeatureVector,
    pub entity: EntityRef<'a>,
    pub prompt: &'a str,
}

#[derive(Debug, Clone)]
pub struct RelationRequest<'a> {
    pub frame_index: usize,
    pub feature: &'a FeatureVector,
    pub context: &'a str,
    pub subject: EntityRef<'a>,
    pub relation: &'a str,
    pub candidate: EntityRef<'a>,
    pub prompt: &'a str,
}

#[derive(Debug, Clone)]
pub struct QaRequest<'a> {
    pub frame_index: usize,
    pub feature: &'a FeatureVector,
    pub context: &'a str,
    pub question: &'a str,
    pub options: &'a [String],
}

/// Scoring contract. Implementations must tolerate concurrent calls.
pub trait ScorerBackend: Send + Sync {
    /// Short label used in manifests and logs.
    fn kind(&self) -> &'static str;

    fn frame_relevance(&self, req: &FrameRequest<'_>) -> Result<f64, BackendError>;

    fn relation_affinity(&self, req: &RelationRequest<'_>) -> Result<f64, BackendError>;

    /// One score per option, in option order.
    fn qa_affinity(&self, req: &QaRequest<'_>) -> Result<Vec<f64>, BackendError>;
}

impl<B: ScorerBackend + ?Sized> ScorerBackend for Box<B> {
    fn kind(&self) -> &'static str {
        (**self).kind()
    }

    fn frame_relevance(&self, req: &FrameRequest<'_>) -> Result<f64, BackendError> {
        (**self).frame_relevance(req)
    }

    fn relation_affinity(&self, req: &RelationRequest<'_>) -> Result<f64, BackendError> {
        (**self).relation_affinity(req)
    }

    fn qa_affinity(&self, req: &QaRequest<'_>) -> Result<Vec<f64>, BackendError> {
        (**self).qa_affinity(req)
    }
}

/// Clamps a backend score into `[0, 1]`. NaN is a protocol error.
pub fn clamp_score(raw: f64) -> Result<f64, BackendError> {
    if raw.is_nan() {
        return Err(BackendError::Protocol("score is NaN".into()));
    }
    Ok(raw.clamp(0.0, 1.0))
}

/// Like [`clamp_score`] but rejects anything beyond rounding slack.
pub(crate) fn strict_score(raw: f64) -> Result<f64, BackendError> {
    if !(-SCORE_SLACK..=1.0 + SCORE_SLACK).contains(&raw) {
        return Err(BackendError::Protocol(format!(
            "score {raw} outside [0, 1]"
        )));
    }
    Ok(raw.clamp(0.0, 1.0))
}

pub(crate) fn frame_score<B: ScorerBackend + ?Sized>(
    backend: &B,
    req: &FrameRequest<'_>,
) -> Result<f64, BackendError> {
    clamp_score(backend.frame_relevance(req)?)
}

pub(crate) fn relation_score<B: ScorerBackend + ?Sized>(
    backend: &B,
    req: &RelationRequest<'_>,
) -> Result<f64, BackendError> {
    clamp_score(backend.relation_affinity(req)?)
}

pub(crate) fn qa_scores<B: ScorerBackend + ?Sized>(
    backend: &B,
    req: &QaRequest<'_>,
) -> Result<Vec<f64>, BackendError> {
    let scores = backend.qa_affinity(req)?;
    if scores.len() != req.options.len() {
        return Err(BackendError::Protocol(format!(
            "expected {} option scores, got {}",
            req.options.len(),
            scores.len()
        )));
    }
    scores.into_iter().map(clamp_score).collect()
}
