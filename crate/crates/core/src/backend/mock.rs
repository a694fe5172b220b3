use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FrameRequest, QaRequest, RelationRequest, ScorerBackend};
use crate::error::{BackendError, Error, Result};
use crate::ingest::{read_json, write_json, MovieBundle};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MockEdge {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockQaEntry {
    pub question: String,
    pub option_index: usize,
    pub score: f64,
}

/// Ground truth that drives [`MockBackend`]: who is visible in each frame,
/// which relation triples hold, and fixed multiple-choice scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MockTruth {
    #[serde(default)]
    pub presence: BTreeMap<usize, BTreeSet<String>>,
    #[serde(default)]
    pub edges: BTreeSet<MockEdge>,
    #[serde(default)]
    pub qa: Vec<MockQaEntry>,
}

impl MockTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn add_edge(&mut self, subject: &str, relation: &str, object: &str) {
        self.edges.insert(MockEdge {
            subject: subject.into(),
            relation: relation.into(),
            object: object.into(),
        });
    }

    pub fn has_edge(&self, subject: &str, relation: &str, object: &str) -> bool {
        self.edges.iter().any(|e| {
            e.subject == subject && e.relation == relation && e.object == object
        })
    }
}

/// Deterministic backend answering from a [`MockTruth`].
///
/// * frame relevance is 1 iff the entity is in the frame's presence set;
/// * relation affinity is 1 iff the triple is an edge and both subject and
///   candidate are present in the frame;
/// * QA scores are looked up by `(question, option index)`, default 0.
#[derive(Debug, Clone)]
pub struct MockBackend {
    presence: BTreeMap<usize, BTreeSet<String>>,
    edges: BTreeSet<(String, String, String)>,
    qa: BTreeMap<(String, usize), f64>,
    entities: BTreeSet<String>,
    relations: BTreeSet<String>,
}

impl MockBackend {
    /// Builds the mock over an explicit entity and relation universe.
    /// Every id mentioned by the truth must resolve in it.
    pub fn new<E, R>(truth: MockTruth, entities: E, relations: R) -> Result<Self>
    where
        E: IntoIterator,
        E::Item: Into<String>,
        R: IntoIterator,
        R::Item: Into<String>,
    {
        let entities: BTreeSet<String> = entities.into_iter().map(Into::into).collect();
        let relations: BTreeSet<String> = relations.into_iter().map(Into::into).collect();

        let unknown = |id: &str| Error::Validation(format!("mock truth mentions unknown entity {id:?}"));
        for ids in truth.presence.values() {
            if let Some(id) = ids.iter().find(|id| !entities.contains(*id)) {
                return Err(unknown(id));
            }
        }
        let mut edges = BTreeSet::new();
        for e in &truth.edges {
            for id in [&e.subject, &e.object] {
                if !entities.contains(id) {
                    return Err(unknown(id));
                }
            }
            if !relations.contains(&e.relation) {
                return Err(Error::Validation(format!(
                    "mock truth mentions unknown relation {:?}",
                    e.relation
                )));
            }
            edges.insert((e.subject.clone(), e.relation.clone(), e.object.clone()));
        }
        let mut qa = BTreeMap::new();
        for q in truth.qa {
            if !(0.0..=1.0).contains(&q.score) {
                return Err(Error::Validation(format!(
                    "mock qa score {} outside [0, 1]",
                    q.score
                )));
            }
            qa.insert((q.question, q.option_index), q.score);
        }
        Ok(Self {
            presence: truth.presence,
            edges,
            qa,
            entities,
            relations,
        })
    }

    pub fn for_bundle(truth: MockTruth, bundle: &MovieBundle) -> Result<Self> {
        Self::new(
            truth,
            bundle.anchors.entities().iter().map(|a| a.entity_id.clone()),
            bundle.ontology.relations.iter().cloned(),
        )
    }

    fn visible(&self, frame: usize, id: &str) -> bool {
        self.presence.get(&frame).is_some_and(|s| s.contains(id))
    }

    fn known_entity(&self, id: &str) -> Result<(), BackendError> {
        if self.entities.contains(id) {
            Ok(())
        } else {
            Err(BackendError::Contract(format!("unknown entity {id:?}")))
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl ScorerBackend for MockBackend {
    fn kind(&self) -> &'static str {
        "mock"
    }

    fn frame_relevance(&self, req: &FrameRequest<'_>) -> Result<f64, BackendError> {
        self.known_entity(req.entity.id)?;
        Ok(indicator(self.visible(req.frame_index, req.entity.id)))
    }

    fn relation_affinity(&self, req: &RelationRequest<'_>) -> Result<f64, BackendError> {
        if !self.relations.contains(req.relation) {
            return Err(BackendError::Contract(format!(
                "unknown relation {:?}",
                req.relation
            )));
        }
        self.known_entity(req.subject.id)?;
        self.known_entity(req.candidate.id)?;
        let edge = (
            req.subject.id.to_string(),
            req.relation.to_string(),
            req.candidate.id.to_string(),
        );
        Ok(indicator(
            self.edges.contains(&edge)
                && self.visible(req.frame_index, req.subject.id)
                && self.visible(req.frame_index, req.candidate.id),
        ))
    }

    fn qa_affinity(&self, req: &QaRequest<'_>) -> Result<Vec<f64>, BackendError> {
        Ok((0..req.options.len())
            .map(|i| {
                self.qa
                    .get(&(req.question.to_string(), i))
                    .copied()
                    .unwrap_or(0.0)
            })
            .collect())
    }
}
