//! Replay of recorded scores, and the recorder that produces them.
//!
//! Score files are JSON lines, one record per scored key:
//!
//! ```text
//! {"op":"frame","frame_index":3,"subject":"ruth","score":0.91}
//! {"op":"relation","frame_index":3,"subject":"ruth","relation":"friend_of","candidate":"carol","score":0.73}
//! {"op":"qa","frame_index":3,"subject":"<question text>","option":1,"score":0.4}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{FrameRequest, QaRequest, RelationRequest, ScorerBackend};
use crate::error::{BackendError, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreOp {
    Frame,
    Relation,
    Qa,
}

/// Lookup key of one recorded score. For `qa` the subject is the question.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScoreKey {
    pub op: ScoreOp,
    pub frame_index: usize,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<usize>,
}

impl ScoreKey {
    fn frame(req: &FrameRequest<'_>) -> Self {
        ScoreKey {
            op: ScoreOp::Frame,
            frame_index: req.frame_index,
            subject: req.entity.id.to_string(),
            relation: None,
            candidate: None,
            option: None,
        }
    }

    fn relation(req: &RelationRequest<'_>) -> Self {
        ScoreKey {
            op: ScoreOp::Relation,
            frame_index: req.frame_index,
            subject: req.subject.id.to_string(),
            relation: Some(req.relation.to_string()),
            candidate: Some(req.candidate.id.to_string()),
            option: None,
        }
    }

    fn qa(req: &QaRequest<'_>, option: usize) -> Self {
        ScoreKey {
            op: ScoreOp::Qa,
            frame_index: req.frame_index,
            subject: req.question.to_string(),
            relation: None,
            candidate: None,
            option: Some(option),
        }
    }
}

impl fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, frame {}, {:?}", self.op, self.frame_index, self.subject)?;
        if let Some(r) = &self.relation {
            write!(f, ", {r:?}")?;
        }
        if let Some(c) = &self.candidate {
            write!(f, ", {c:?}")?;
        }
        if let Some(o) = self.option {
            write!(f, ", option {o}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    #[serde(flatten)]
    pub key: ScoreKey,
    pub score: f64,
}

/// What to do when a replayed request has no recorded score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MissingKeyPolicy {
    #[default]
    #[serde(rename = "strict")]
    Strict,
    #[serde(rename = "zero")]
    DefaultZero,
}

impl FromStr for MissingKeyPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "strict" | "error" => Ok(Self::Strict),
            "zero" | "default-zero" => Ok(Self::DefaultZero),
            other => Err(format!("unknown missing-key policy {other:?} (use strict or zero)")),
        }
    }
}

/// Replays scores from a recorded score file.
#[derive(Debug, Clone)]
pub struct FileBackend {
    scores: BTreeMap<ScoreKey, f64>,
    policy: MissingKeyPolicy,
}

impl FileBackend {
    pub fn from_records(
        records: impl IntoIterator<Item = ScoreRecord>,
        policy: MissingKeyPolicy,
    ) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for r in records {
            if !(0.0..=1.0).contains(&r.score) {
                return Err(Error::Validation(format!(
                    "recorded score {} for {} outside [0, 1]",
                    r.score, r.key
                )));
            }
            if let Some(prev) = scores.insert(r.key.clone(), r.score) {
                if prev != r.score {
                    return Err(Error::Validation(format!(
                        "conflicting recorded scores for {}: {prev} vs {}",
                        r.key, r.score
                    )));
                }
            }
        }
        Ok(Self { scores, policy })
    }

    pub fn load(path: impl AsRef<Path>, policy: MissingKeyPolicy) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreRecord = serde_json::from_str(&line)
                .map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?;
            records.push(rec);
        }
        Self::from_records(records, policy)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn lookup(&self, key: ScoreKey) -> Result<f64, BackendError> {
        match (self.scores.get(&key), self.policy) {
            (Some(s), _) => Ok(*s),
            (None, MissingKeyPolicy::DefaultZero) => Ok(0.0),
            (None, MissingKeyPolicy::Strict) => Err(BackendError::MissingKey(key.to_string())),
        }
    }
}

impl ScorerBackend for FileBackend {
    fn kind(&self) -> &'static str {
        "file"
    }

    fn frame_relevance(&self, req: &FrameRequest<'_>) -> Result<f64, BackendError> {
        self.lookup(ScoreKey::frame(req))
    }

    fn relation_affinity(&self, req: &RelationRequest<'_>) -> Result<f64, BackendError> {
        self.lookup(ScoreKey::relation(req))
    }

    fn qa_affinity(&self, req: &QaRequest<'_>) -> Result<Vec<f64>, BackendError> {
        (0..req.options.len())
            .map(|i| self.lookup(ScoreKey::qa(req, i)))
            .collect()
    }
}

/// Wraps a backend and remembers every score it returns, keyed the way
/// [`FileBackend`] replays them.
pub struct RecordingBackend<B> {
    inner: B,
    seen: Mutex<BTreeMap<ScoreKey, f64>>,
}

impl<B: ScorerBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            seen: Mutex::new(BTreeMap::new()),
        }
    }

    fn remember(&self, key: ScoreKey, score: f64) {
        self.seen
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, score);
    }

    /// Recorded scores in key order.
    pub fn records(&self) -> Vec<ScoreRecord> {
        self.seen
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .iter()
            .map(|(k, s)| ScoreRecord {
                key: k.clone(),
                score: *s,
            })
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for r in self.records() {
            serde_json::to_writer(&mut w, &r)
                .map_err(|e| Error::json(path.display().to_string(), e))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: ScorerBackend> ScorerBackend for RecordingBackend<B> {
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    fn frame_relevance(&self, req: &FrameRequest<'_>) -> Result<f64, BackendError> {
        let s = super::clamp_score(self.inner.frame_relevance(req)?)?;
        self.remember(ScoreKey::frame(req), s);
        Ok(s)
    }

    fn relation_affinity(&self, req: &RelationRequest<'_>) -> Result<f64, BackendError> {
        let s = super::clamp_score(self.inner.relation_affinity(req)?)?;
        self.remember(ScoreKey::relation(req), s);
        Ok(s)
    }

    fn qa_affinity(&self, req: &QaRequest<'_>) -> Result<Vec<f64>, BackendError> {
        let scores = self.inner.qa_affinity(req)?;
        let scores: Vec<f64> = scores
            .into_iter()
            .map(super::clamp_score)
            .collect::<Result<_, _>>()?;
        for (i, s) in scores.iter().enumerate() {
            self.remember(ScoreKey::qa(req, i), *s);
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{EntityRef, FRAME_PROMPT};
    use crate::feature::FeatureVector;

    fn frame_key(frame_index: usize, subject: &str) -> ScoreKey {
        ScoreKey {
            op: ScoreOp::Frame,
            frame_index,
            subject: subject.into(),
            relation: None,
            candidate: None,
            option: None,
        }
    }

    fn req<'a>(f: &'a FeatureVector, frame_index: usize, id: &'a str) -> FrameRequest<'a> {
        FrameRequest {
            frame_index,
            feature: f,
            entity: EntityRef {
                id,
                name: id,
                entity_type: "person",
            },
            prompt: FRAME_PROMPT,
        }
    }

    fn backend(policy: MissingKeyPolicy) -> FileBackend {
        FileBackend::from_records(
            [ScoreRecord {
                key: frame_key(2, "ruth"),
                score: 0.73,
            }],
            policy,
        )
        .unwrap()
    }

    #[test]
    fn replays_recorded_score() {
        let f = FeatureVector::zeros(1);
        assert_eq!(
            backend(MissingKeyPolicy::Strict).frame_relevance(&req(&f, 2, "ruth")).unwrap(),
            0.73
        );
    }

    #[test]
    fn missing_key_policies() {
        let f = FeatureVector::zeros(1);
        assert_eq!(
            backend(MissingKeyPolicy::DefaultZero)
                .frame_relevance(&req(&f, 9, "ruth"))
                .unwrap(),
            0.0
        );
        match backend(MissingKeyPolicy::Strict).frame_relevance(&req(&f, 9, "ruth")) {
            Err(BackendError::MissingKey(k)) => {
                assert!(k.contains("frame 9") && k.contains("ruth"), "{k}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.jsonl");
        fs::write(&p, "{\"op\":\"frame\",\"frame_index\":1}\n").unwrap();
        assert!(matches!(
            FileBackend::load(&p, MissingKeyPolicy::Strict),
            Err(Error::Json { .. })
        ));
        fs::write(&p, "not json\n").unwrap();
        assert!(FileBackend::load(&p, MissingKeyPolicy::Strict).is_err());
    }

    #[test]
    fn conflicting_and_out_of_range_records_rejected() {
        let dup = [
            ScoreRecord {
                key: frame_key(1, "a"),
                score: 0.1,
            },
            ScoreRecord {
                key: frame_key(1, "a"),
                score: 0.2,
            },
        ];
        assert!(FileBackend::from_records(dup, MissingKeyPolicy::Strict).is_err());
        let bad = [ScoreRecord {
            key: frame_key(1, "a"),
            score: 1.5,
        }];
        assert!(FileBackend::from_records(bad, MissingKeyPolicy::Strict).is_err());
    }

    #[test]
    fn record_line_format() {
        let r = ScoreRecord {
            key: frame_key(3, "ruth"),
            score: 0.5,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"op":"frame","frame_index":3,"subject":"ruth","score":0.5}"#
        );
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("zero".parse::<MissingKeyPolicy>().unwrap(), MissingKeyPolicy::DefaultZero);
        assert_eq!("strict".parse::<MissingKeyPolicy>().unwrap(), MissingKeyPolicy::Strict);
        assert!("lenient".parse::<MissingKeyPolicy>().is_err());
    }
}
