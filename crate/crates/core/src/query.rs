//! Query decomposition, pipeline orchestration, score aggregation and the
//! final confidence-ranked answer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::backend::ScorerBackend;
use crate::entity::{name_detections, pool_and_augment, AugmentedFrame, PoolingWeights};
use crate::error::{Error, Result};
use crate::ingest::{read_json, write_json, AnchorEntity, MovieBundle};
use crate::relation::{gather_evidence, score_qa, score_relations, subtitle_window, ScoreTable};
use crate::select::{score_frames, select_top_k, FrameScore, SelectedFrame};

/// Placeholder for the unknown entity in query files.
pub const BLANK: &str = "<BLANK>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    File,
    Remote,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Mock => "mock",
            BackendKind::File => "file",
            BackendKind::Remote => "remote",
        })
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mock" => Ok(Self::Mock),
            "file" => Ok(Self::File),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown backend {other:?} (mock, file, remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Seconds between sampled frames.
    pub sampling_period_s: f64,
    /// Frames kept per subquery.
    pub top_k: usize,
    /// Minimum cosine similarity for naming a detection.
    pub naming_threshold: f64,
    /// Half-width of the subtitle window around a frame, in seconds.
    pub vicinity_s: f64,
    pub backend: BackendKind,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sampling_period_s: 1.0,
            top_k: 10,
            naming_threshold: 0.5,
            vicinity_s: 15.0,
            backend: BackendKind::Mock,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.sampling_period_s <= 0.0 || !self.sampling_period_s.is_finite() {
            return bad(format!("sampling period must be > 0, got {}", self.sampling_period_s));
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1".into());
        }
        if !(-1.0..=1.0).contains(&self.naming_threshold) {
            return bad(format!(
                "naming threshold must lie in [-1, 1], got {}",
                self.naming_threshold
            ));
        }
        if self.vicinity_s <= 0.0 || !self.vicinity_s.is_finite() {
            return bad(format!("subtitle vicinity must be > 0, got {}", self.vicinity_s));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Argument {
    Entity(String),
    Blank,
}

impl From<String> for Argument {
    fn from(s: String) -> Self {
        if s == BLANK {
            Argument::Blank
        } else {
            Argument::Entity(s)
        }
    }
}

impl From<Argument> for String {
    fn from(a: Argument) -> Self {
        match a {
            Argument::Entity(s) => s,
            Argument::Blank => BLANK.to_string(),
        }
    }
}

impl Serialize for Argument {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Argument::Entity(id) => s.serialize_str(id),
            Argument::Blank => s.serialize_str(BLANK),
        }
    }
}

impl<'de> Deserialize<'de> for Argument {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d).map(Argument::from)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub relation: String,
    pub argument: Argument,
}

impl Condition {
    pub fn known(relation: &str, entity: &str) -> Self {
        Self {
            relation: relation.into(),
            argument: Argument::Entity(entity.into()),
        }
    }

    pub fn blank(relation: &str) -> Self {
        Self {
            relation: relation.into(),
            argument: Argument::Blank,
        }
    }
}

/// A fill-in-the-blank query: relation conditions around one unknown entity
/// of type `blank_type`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphQuery {
    pub query_id: String,
    pub conditions: Vec<Condition>,
    pub blank_type: String,
}

impl GraphQuery {
    /// Known entities in order of first mention.
    pub fn known_entities(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.conditions
            .iter()
            .filter_map(|c| match &c.argument {
                Argument::Entity(id) if seen.insert(id.as_str()) => Some(id.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn validate(&self, bundle: &MovieBundle) -> Result<()> {
        if self.conditions.is_empty() {
            return Err(Error::UnanswerableQuery(format!("{}: no conditions", self.query_id)));
        }
        if !bundle.ontology.has_entity_type(&self.blank_type) {
            return Err(Error::Validation(format!(
                "query {}: unknown blank type {:?}",
                self.query_id, self.blank_type
            )));
        }
        for c in &self.conditions {
            if !bundle.ontology.has_relation(&c.relation) {
                return Err(Error::Validation(format!(
                    "query {}: relation {:?} not in ontology",
                    self.query_id, c.relation
                )));
            }
            if let Argument::Entity(id) = &c.argument {
                if !bundle.anchors.contains(id) {
                    return Err(Error::Validation(format!(
                        "query {}: entity {id:?} not in anchor registry",
                        self.query_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One condition scored on its own: find entities standing in `relation`
/// to `known_entity`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubQuery {
    pub known_entity: String,
    pub relation: String,
}

/// Splits a query into single-condition subqueries. A condition on a known
/// entity becomes one subquery; a condition whose argument is the blank
/// pairs its relation with every known entity of the query. Duplicates are
/// dropped, first occurrence wins.
pub fn decompose(q: &GraphQuery) -> Result<Vec<SubQuery>> {
    let known = q.known_entities();
    if known.is_empty() {
        return Err(Error::UnanswerableQuery(format!(
            "{}: no condition names a known entity",
            q.query_id
        )));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |e: &str, r: &str| {
        let sq = SubQuery {
            known_entity: e.to_string(),
            relation: r.to_string(),
        };
        if seen.insert(sq.clone()) {
            out.push(sq);
        }
    };
    for c in &q.conditions {
        match &c.argument {
            Argument::Entity(e) => push(e, &c.relation),
            Argument::Blank => known.iter().for_each(|e| push(e, &c.relation)),
        }
    }
    Ok(out)
}

/// Sums relation scores per candidate over every table and frame.
pub fn aggregate(tables: &[ScoreTable]) -> BTreeMap<String, f64> {
    let mut totals = BTreeMap::new();
    accumulate(&mut totals, tables);
    totals
}

fn accumulate(totals: &mut BTreeMap<String, f64>, tables: &[ScoreTable]) {
    for t in tables {
        for ((cand, _rank), s) in &t.entries {
            *totals.entry(cand.clone()).or_insert(0.0) += s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub entity_id: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub query_id: String,
    pub ranking: Vec<RankedEntity>,
    pub predicted: String,
}

/// Turns non-negative weights into percentages summing to 100; all-zero
/// weights become a uniform distribution.
pub fn normalize_confidences(weights: &[f64]) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        weights.iter().map(|w| 100.0 * w / sum).collect()
    } else {
        vec![100.0 / weights.len() as f64; weights.len()]
    }
}

/// Ranks candidates by total score (ties by entity id) with confidences
/// normalized to sum to 100.
pub fn predict(query_id: &str, totals: &BTreeMap<String, f64>) -> Result<RankedAnswer> {
    if totals.is_empty() {
        return Err(Error::UnanswerableQuery(format!(
            "{query_id}: no candidate entities"
        )));
    }
    if let Some((id, t)) = totals.iter().find(|(_, t)| **t < 0.0 || !t.is_finite()) {
        return Err(Error::Validation(format!(
            "{query_id}: total for {id} is {t}, expected a finite non-negative value"
        )));
    }
    // BTreeMap iteration is id-ascending; a stable sort keeps that on ties.
    let mut ordered: Vec<(&String, f64)> = totals.iter().map(|(k, v)| (k, *v)).collect();
    ordered.sort_by(|a, b| b.1.total_cmp(&a.1));
    let weights: Vec<f64> = ordered.iter().map(|(_, t)| *t).collect();
    let ranking: Vec<RankedEntity> = ordered
        .iter()
        .zip(normalize_confidences(&weights))
        .map(|((id, _), confidence)| RankedEntity {
            entity_id: (*id).clone(),
            confidence,
        })
        .collect();
    Ok(RankedAnswer {
        query_id: query_id.to_string(),
        predicted: ranking[0].entity_id.clone(),
        ranking,
    })
}

/// Multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaQuery {
    pub query_id: String,
    pub question: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaAnswer {
    pub query_id: String,
    pub chosen_option: usize,
    /// Per-option confidence, summing to 100.
    pub confidences: Vec<f64>,
}

/// Intermediate results for one subquery, kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubQueryTrace {
    pub subquery: SubQuery,
    pub selected: Vec<SelectedFrame>,
    pub table: ScoreTable,
}

/// A movie prepared for querying: every frame named and pooled once, shared
/// across all queries.
pub struct Pipeline<'a> {
    bundle: &'a MovieBundle,
    config: PipelineConfig,
    frames: Vec<AugmentedFrame>,
}

impl<'a> Pipeline<'a> {
    pub fn new(bundle: &'a MovieBundle, config: PipelineConfig, weights: &PoolingWeights) -> Result<Self> {
        config.validate()?;
        bundle.check_sampling_period(config.sampling_period_s)?;
        if weights.dim() != bundle.anchors.dim() {
            return Err(Error::InvalidConfig(format!(
                "pooling weights have dim {}, anchors have dim {}",
                weights.dim(),
                bundle.anchors.dim()
            )));
        }
        let frames = bundle
            .frames
            .par_iter()
            .map(|f| {
                let named = name_detections(f, &bundle.anchors, config.naming_threshold);
                pool_and_augment(f, named, weights)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bundle,
            config,
            frames,
        })
    }

    /// Prepares with uniform attention and `[I I]` augmentation.
    pub fn with_default_weights(bundle: &'a MovieBundle, config: PipelineConfig) -> Result<Self> {
        Self::new(bundle, config, &PoolingWeights::identity(bundle.anchors.dim()))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn bundle(&self) -> &MovieBundle {
        self.bundle
    }

    pub fn frames(&self) -> &[AugmentedFrame] {
        &self.frames
    }

    /// Entities named in each frame, as seen through the detections.
    pub fn perceived_presence(&self) -> BTreeMap<usize, BTreeSet<String>> {
        self.frames
            .iter()
            .filter(|f| !f.named.is_empty())
            .map(|f| {
                (
                    f.slot.index,
                    f.named.iter().map(|n| n.entity_id.clone()).collect(),
                )
            })
            .collect()
    }

    /// Entities of the blank's type, minus every entity the query names.
    pub fn candidates(&self, q: &GraphQuery) -> Vec<&'a AnchorEntity> {
        let known: BTreeSet<&str> = q.known_entities().into_iter().collect();
        self.bundle
            .anchors
            .sorted()
            .filter(|a| a.entity_type == q.blank_type && !known.contains(a.entity_id.as_str()))
            .collect()
    }

    fn entity(&self, id: &str) -> Result<&'a AnchorEntity> {
        self.bundle
            .anchors
            .get(id)
            .ok_or_else(|| Error::Validation(format!("entity {id:?} not in anchor registry")))
    }

    fn select_frames<B: ScorerBackend + ?Sized>(
        &self,
        entity: &AnchorEntity,
        backend: &B,
    ) -> Result<Vec<SelectedFrame>> {
        let scores = score_frames(&self.frames, entity, backend)?;
        Ok(select_top_k(&scores, self.config.top_k))
    }

    fn contexts(&self, selected: &[SelectedFrame]) -> Vec<crate::relation::ContextWindow> {
        selected
            .iter()
            .map(|s| subtitle_window(&self.bundle.cues, s.slot, self.config.vicinity_s))
            .collect()
    }

    /// Frame selection, context retrieval and relation scoring for one
    /// subquery.
    pub fn run_subquery<B: ScorerBackend + ?Sized>(
        &self,
        query_id: &str,
        subquery: &SubQuery,
        candidates: &[&AnchorEntity],
        backend: &B,
    ) -> Result<SubQueryTrace> {
        let subject = self
            .entity(&subquery.known_entity)
            .map_err(|e| e.at_stage(query_id, "decomposition"))?;
        let selected = self
            .select_frames(subject, backend)
            .map_err(|e| e.at_stage(query_id, "frame selection"))?;
        let contexts = self.contexts(&selected);
        let table = gather_evidence(&selected, &contexts, &self.frames)
            .and_then(|ev| score_relations(&ev, subquery, subject, candidates, backend))
            .map_err(|e| e.at_stage(query_id, "relation scoring"))?;
        debug!(
            query_id,
            subject = %subquery.known_entity,
            relation = %subquery.relation,
            frames = selected.len(),
            pairs = table.len(),
            "scored subquery"
        );
        Ok(SubQueryTrace {
            subquery: subquery.clone(),
            selected,
            table,
        })
    }

    /// Answers a graph query and returns the per-subquery traces too.
    pub fn trace_graph_query<B: ScorerBackend + ?Sized>(
        &self,
        q: &GraphQuery,
        backend: &B,
    ) -> Result<(RankedAnswer, Vec<SubQueryTrace>)> {
        q.validate(self.bundle)
            .map_err(|e| e.at_stage(&q.query_id, "validation"))?;
        let subqueries = decompose(q).map_err(|e| e.at_stage(&q.query_id, "decomposition"))?;
        let candidates = self.candidates(q);

        let traces = subqueries
            .iter()
            .map(|sq| self.run_subquery(&q.query_id, sq, &candidates, backend))
            .collect::<Result<Vec<_>>>()?;

        let mut totals: BTreeMap<String, f64> = candidates
            .iter()
            .map(|c| (c.entity_id.clone(), 0.0))
            .collect();
        let tables: Vec<ScoreTable> = traces.iter().map(|t| t.table.clone()).collect();
        accumulate(&mut totals, &tables);
        let answer =
            predict(&q.query_id, &totals).map_err(|e| e.at_stage(&q.query_id, "prediction"))?;
        Ok((answer, traces))
    }

    pub fn answer_graph_query<B: ScorerBackend + ?Sized>(
        &self,
        q: &GraphQuery,
        backend: &B,
    ) -> Result<RankedAnswer> {
        self.trace_graph_query(q, backend).map(|(a, _)| a)
    }

    /// Registry entities whose name or id occurs as a whole word in `text`.
    pub fn mentioned_entities(&self, text: &str) -> Vec<&'a AnchorEntity> {
        let hay = text.to_lowercase();
        self.bundle
            .anchors
            .sorted()
            .filter(|a| mentions(&hay, &a.name.to_lowercase()) || mentions(&hay, &a.entity_id.to_lowercase()))
            .collect()
    }

    /// Multiple-choice answering. Frames are selected for the entities the
    /// question mentions (per-frame score is the best over those entities);
    /// a question that mentions none is scored on every frame.
    pub fn answer_qa_query<B: ScorerBackend + ?Sized>(
        &self,
        q: &QaQuery,
        backend: &B,
    ) -> Result<QaAnswer> {
        let id = q.query_id.as_str();
        if q.options.is_empty() {
            return Err(Error::Validation("question has no options".into()).at_stage(id, "validation"));
        }
        let mentioned = self.mentioned_entities(&q.question);
        let selected = if mentioned.is_empty() {
            self.frames
                .iter()
                .enumerate()
                .map(|(i, f)| SelectedFrame {
                    slot: f.slot,
                    score: 0.0,
                    rank: i + 1,
                })
                .collect()
        } else {
            let mut best: Vec<FrameScore> = Vec::new();
            for e in &mentioned {
                let scores =
                    score_frames(&self.frames, e, backend).map_err(|e| e.at_stage(id, "frame selection"))?;
                if best.is_empty() {
                    best = scores;
                } else {
                    for (b, s) in best.iter_mut().zip(scores) {
                        b.score = b.score.max(s.score);
                    }
                }
            }
            select_top_k(&best, self.config.top_k)
        };

        let contexts = self.contexts(&selected);
        let per_frame = gather_evidence(&selected, &contexts, &self.frames)
            .and_then(|ev| score_qa(&ev, &q.question, &q.options, backend))
            .map_err(|e| e.at_stage(id, "qa scoring"))?;

        let mut totals = vec![0.0; q.options.len()];
        for frame in &per_frame {
            for s in frame {
                totals[s.option_index] += s.score;
            }
        }
        let mut chosen = 0;
        for (i, t) in totals.iter().enumerate() {
            if *t > totals[chosen] {
                chosen = i;
            }
        }
        Ok(QaAnswer {
            query_id: q.query_id.clone(),
            chosen_option: chosen,
            confidences: normalize_confidences(&totals),
        })
    }
}

fn mentions(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    haystack.match_indices(needle).any(|(start, m)| {
        let before = haystack[..start].chars().next_back();
        let after = haystack[start + m.len()..].chars().next();
        !before.is_some_and(is_word) && !after.is_some_and(is_word)
    })
}

/// One-shot convenience: prepares the movie with default pooling weights
/// and answers a single graph query.
pub fn answer_graph_query<B: ScorerBackend + ?Sized>(
    bundle: &MovieBundle,
    q: &GraphQuery,
    config: &PipelineConfig,
    backend: &B,
) -> Result<RankedAnswer> {
    Pipeline::with_default_weights(bundle, config.clone())?.answer_graph_query(q, backend)
}

pub fn answer_qa_query<B: ScorerBackend + ?Sized>(
    bundle: &MovieBundle,
    q: &QaQuery,
    config: &PipelineConfig,
    backend: &B,
) -> Result<QaAnswer> {
    Pipeline::with_default_weights(bundle, config.clone())?.answer_qa_query(q, backend)
}

pub fn read_graph_queries(path: impl AsRef<Path>) -> Result<Vec<GraphQuery>> {
    read_json(path.as_ref())
}

pub fn write_graph_queries(path: impl AsRef<Path>, queries: &[GraphQuery]) -> Result<()> {
    write_json(path.as_ref(), queries)
}

pub fn read_qa_queries(path: impl AsRef<Path>) -> Result<Vec<QaQuery>> {
    read_json(path.as_ref())
}

pub fn write_answers<T: Serialize>(path: impl AsRef<Path>, answers: &[T]) -> Result<()> {
    write_json(path.as_ref(), answers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, MockQaEntry};
    use crate::synth::{generate, SynthSpec};

    fn apprentice_query() -> GraphQuery {
        GraphQuery {
            query_id: "apprentice".into(),
            conditions: vec![
                Condition::known("socialises_at", "home"),
                Condition::known("apprentice_of", "willis"),
                Condition::blank("friend_of"),
            ],
            blank_type: "person".into(),
        }
    }

    fn sq(e: &str, r: &str) -> SubQuery {
        SubQuery {
            known_entity: e.into(),
            relation: r.into(),
        }
    }

    fn table(entries: &[(&str, usize, f64)]) -> ScoreTable {
        ScoreTable {
            subquery: sq("x", "r"),
            entries: entries.iter().map(|(c, r, s)| ((c.to_string(), *r), *s)).collect(),
        }
    }

    fn totals(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn decompose_pairs_blank_with_every_known_entity() {
        let got = decompose(&apprentice_query()).unwrap();
        assert_eq!(
            got,
            vec![
                sq("home", "socialises_at"),
                sq("willis", "apprentice_of"),
                sq("home", "friend_of"),
                sq("willis", "friend_of"),
            ]
        );
    }

    #[test]
    fn decompose_single_and_degenerate() {
        let q = GraphQuery {
            query_id: "q".into(),
            conditions: vec![Condition::known("friend_of", "anna")],
            blank_type: "person".into(),
        };
        assert_eq!(decompose(&q).unwrap(), vec![sq("anna", "friend_of")]);

        let blank = GraphQuery {
            conditions: vec![Condition::blank("friend_of"), Condition::blank("rival_of")],
            ..q.clone()
        };
        assert!(matches!(decompose(&blank), Err(Error::UnanswerableQuery(_))));

        let dup = GraphQuery {
            conditions: vec![Condition::known("friend_of", "anna"), Condition::blank("friend_of")],
            ..q
        };
        assert_eq!(decompose(&dup).unwrap().len(), 1);
    }

    #[test]
    fn query_file_round_trip_uses_blank_marker() {
        let json = serde_json::to_string(&apprentice_query()).unwrap();
        assert!(json.contains("\"<BLANK>\""));
        let back: GraphQuery = serde_json::from_str(&json).unwrap();
        assert_eq!(back, apprentice_query());
    }

    #[test]
    fn aggregate_sums_per_candidate() {
        let got = aggregate(&[
            table(&[("A", 1, 0.5), ("B", 1, 0.2)]),
            table(&[("A", 1, 0.1), ("B", 1, 0.7)]),
        ]);
        assert!((got["A"] - 0.6).abs() < 1e-12);
        assert!((got["B"] - 0.9).abs() < 1e-12);
        assert!(aggregate(&[]).is_empty());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict("q", &totals(&[("A", 3.2), ("B", 1.1)])).unwrap().predicted, "A");

        let tie = predict("q", &totals(&[("B", 1.0), ("A", 1.0)])).unwrap();
        assert_eq!(tie.predicted, "A");
        assert_eq!(
            tie.ranking,
            vec![
                RankedEntity { entity_id: "A".into(), confidence: 50.0 },
                RankedEntity { entity_id: "B".into(), confidence: 50.0 },
            ]
        );

        let three = predict("q", &totals(&[("A", 2.0), ("B", 1.0), ("C", 1.0)])).unwrap();
        let conf: Vec<f64> = three.ranking.iter().map(|r| r.confidence).collect();
        assert_eq!(conf, vec![50.0, 25.0, 25.0]);

        let zero = predict("q", &totals(&[("C", 0.0), ("A", 0.0), ("B", 0.0)])).unwrap();
        assert_eq!(zero.predicted, "A");
        assert!(zero.ranking.iter().all(|r| (r.confidence - 100.0 / 3.0).abs() < 1e-12));

        assert!(predict("q", &BTreeMap::new()).is_err());
        assert!(predict("q", &totals(&[("A", -1.0)])).is_err());
        assert!(predict("q", &totals(&[("A", f64::NAN)])).is_err());
    }

    fn small_movie() -> crate::synth::SynthMovie {
        generate(&SynthSpec {
            n_frames: 60,
            n_queries: 12,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn planted_answers_are_recovered() {
        let movie = small_movie();
        let mock = MockBackend::for_bundle(movie.truth.clone(), &movie.bundle).unwrap();
        let pipe = Pipeline::with_default_weights(&movie.bundle, PipelineConfig::default()).unwrap();
        for q in &movie.queries {
            let a = pipe.answer_graph_query(q, &mock).unwrap();
            assert_eq!(Some(a.predicted.as_str()), movie.gold_for(&q.query_id), "{}", q.query_id);
            let sum: f64 = a.ranking.iter().map(|r| r.confidence).sum();
            assert!((sum - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn absent_known_entity_gives_uniform_answer() {
        let movie = small_movie();
        let mut truth = movie.truth.clone();
        truth.presence.values_mut().for_each(|s| {
            s.remove("ruth");
        });
        let mock = MockBackend::for_bundle(truth, &movie.bundle).unwrap();
        let q = GraphQuery {
            query_id: "lonely".into(),
            conditions: vec![Condition::known("friend_of", "ruth")],
            blank_type: "person".into(),
        };
        let a = answer_graph_query(&movie.bundle, &q, &PipelineConfig::default(), &mock).unwrap();
        let n = a.ranking.len() as f64;
        assert!(a.ranking.iter().all(|r| (r.confidence - 100.0 / n).abs() < 1e-9));
        let ids: Vec<&str> = a.ranking.iter().map(|r| r.entity_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(a.predicted, ids[0]);
        assert!(!ids.contains(&"ruth"));
    }

    #[test]
    fn repeated_runs_serialize_identically() {
        let movie = small_movie();
        let mock = MockBackend::for_bundle(movie.truth.clone(), &movie.bundle).unwrap();
        let run = || {
            let pipe = Pipeline::with_default_weights(&movie.bundle, PipelineConfig::default()).unwrap();
            let answers: Vec<_> = movie
                .queries
                .iter()
                .map(|q| pipe.answer_graph_query(q, &mock).unwrap())
                .collect();
            serde_json::to_vec(&answers).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_queries_are_rejected_with_stage() {
        let movie = small_movie();
        let mock = MockBackend::for_bundle(movie.truth.clone(), &movie.bundle).unwrap();
        let pipe = Pipeline::with_default_weights(&movie.bundle, PipelineConfig::default()).unwrap();
        let q = GraphQuery {
            query_id: "bad".into(),
            conditions: vec![Condition::known("friend_of", "nobody")],
            blank_type: "person".into(),
        };
        match pipe.answer_graph_query(&q, &mock) {
            Err(Error::Stage { query_id, stage, .. }) => assert_eq!((query_id.as_str(), stage), ("bad", "validation")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn qa_setup(scores: &[f64]) -> (crate::synth::SynthMovie, MockBackend, QaQuery) {
        let movie = small_movie();
        let question = "What does Ruth carry?".to_string();
        let mut truth = movie.truth.clone();
        for (i, s) in scores.iter().enumerate() {
            truth.qa.push(MockQaEntry {
                question: question.clone(),
                option_index: i,
                score: *s,
            });
        }
        let mock = MockBackend::for_bundle(truth, &movie.bundle).unwrap();
        let q = QaQuery {
            query_id: "qa1".into(),
            question,
            options: (0..scores.len()).map(|i| format!("option {i}")).collect(),
            answer_index: None,
        };
        (movie, mock, q)
    }

    #[test]
    fn qa_picks_highest_option() {
        let (movie, mock, q) = qa_setup(&[0.0, 0.0, 1.0]);
        let a = answer_qa_query(&movie.bundle, &q, &PipelineConfig::default(), &mock).unwrap();
        assert_eq!(a.chosen_option, 2);
        assert_eq!(a.confidences, vec![0.0, 0.0, 100.0]);
    }

    #[test]
    fn qa_ties_and_singletons() {
        let (movie, mock, q) = qa_setup(&[0.4, 0.4, 0.4]);
        let cfg = PipelineConfig::default();
        assert_eq!(answer_qa_query(&movie.bundle, &q, &cfg, &mock).unwrap().chosen_option, 0);

        let (movie, mock, q) = qa_setup(&[0.0]);
        let a = answer_qa_query(&movie.bundle, &q, &cfg, &mock).unwrap();
        assert_eq!((a.chosen_option, a.confidences.clone()), (0, vec![100.0]));

        let empty = QaQuery { options: vec![], ..q };
        assert!(answer_qa_query(&movie.bundle, &empty, &cfg, &mock).is_err());
    }

    #[test]
    fn mentions_are_whole_words() {
        let movie = small_movie();
        let pipe = Pipeline::with_default_weights(&movie.bundle, PipelineConfig::default()).unwrap();
        let ids = |t: &str| -> Vec<String> {
            pipe.mentioned_entities(t).iter().map(|a| a.entity_id.clone()).collect()
        };
        assert_eq!(ids("Where did RUTH go?"), vec!["ruth"]);
        assert!(ids("Ruthless people").is_empty());
        assert_eq!(ids("Carol met Ruth."), vec!["carol", "ruth"]);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        for bad in [
            PipelineConfig { top_k: 0, ..Default::default() },
            PipelineConfig { sampling_period_s: 0.0, ..Default::default() },
            PipelineConfig { vicinity_s: -1.0, ..Default::default() },
            PipelineConfig { naming_threshold: f64::NAN, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        let movie = small_movie();
        let wrong_p = PipelineConfig { sampling_period_s: 2.0, ..Default::default() };
        assert!(Pipeline::with_default_weights(&movie.bundle, wrong_p).is_err());
    }
}
