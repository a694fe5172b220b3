//! Subtitle context around selected frames, and relation / multiple-choice
//! scoring of candidates on those frames.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::backend::{self, EntityRef, QaRequest, RelationRequest, ScorerBackend, RELATION_PROMPT};
use crate::entity::AugmentedFrame;
use crate::error::{Error, Result};
use crate::ingest::{AnchorEntity, FrameSlot, SubtitleCue};
use crate::query::SubQuery;
use crate::select::SelectedFrame;

/// Subtitle text around one frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextWindow {
    pub slot: FrameSlot,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub text: String,
}

/// Collects every cue overlapping `[t - width, t + width]` (closed on both
/// ends, start clamped at 0) and joins their text in start-time order.
pub fn subtitle_window(cues: &[SubtitleCue], slot: FrameSlot, width_s: f64) -> ContextWindow {
    let window_start_s = (slot.timestamp_s - width_s).max(0.0);
    let window_end_s = slot.timestamp_s + width_s;
    let mut hits: Vec<&SubtitleCue> = cues
        .iter()
        .filter(|c| c.start_s <= window_end_s && c.end_s >= window_start_s)
        .collect();
    // Stable: cues with equal start keep file order.
    hits.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let text = hits
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    ContextWindow {
        slot,
        window_start_s,
        window_end_s,
        text,
    }
}

/// Relation scores for one subquery, keyed by `(candidate id, frame rank)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    pub subquery: SubQuery,
    pub entries: BTreeMap<(String, usize), f64>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        let mut last: Option<&str> = None;
        self.entries.keys().filter_map(move |(c, _)| {
            let fresh = last != Some(c.as_str());
            last = Some(c.as_str());
            fresh.then_some(c.as_str())
        })
    }
}

/// One selected frame with everything the scorers need from it.
#[derive(Debug, Clone, Copy)]
pub struct FrameEvidence<'a> {
    pub selected: &'a SelectedFrame,
    pub frame: &'a AugmentedFrame,
    pub context: &'a ContextWindow,
}

/// Pairs selected frames with their augmented frame and context window.
/// `frames` must be sorted by frame index; `contexts` aligns with `selected`.
pub fn gather_evidence<'a>(
    selected: &'a [SelectedFrame],
    contexts: &'a [ContextWindow],
    frames: &'a [AugmentedFrame],
) -> Result<Vec<FrameEvidence<'a>>> {
    if selected.len() != contexts.len() {
        return Err(Error::Validation(format!(
            "{} selected frames but {} context windows",
            selected.len(),
            contexts.len()
        )));
    }
    selected
        .iter()
        .zip(contexts)
        .map(|(s, c)| {
            let pos = frames
                .binary_search_by_key(&s.slot.index, |f| f.slot.index)
                .map_err(|_| Error::Validation(format!("selected frame {} not found", s.slot.index)))?;
            Ok(FrameEvidence {
                selected: s,
                frame: &frames[pos],
                context: c,
            })
        })
        .collect()
}

/// Scores every `(candidate, frame)` pair for the subquery's relation with
/// the relation prompt. The subquery's own entity is never a candidate.
pub fn score_relations<B: ScorerBackend + ?Sized>(
    evidence: &[FrameEvidence<'_>],
    subquery: &SubQuery,
    subject: &AnchorEntity,
    candidates: &[&AnchorEntity],
    backend: &B,
) -> Result<ScoreTable> {
    let pairs: Vec<(&AnchorEntity, &FrameEvidence<'_>)> = candidates
        .iter()
        .filter(|c| c.entity_id != subquery.known_entity)
        .flat_map(|c| evidence.iter().map(move |ev| (*c, ev)))
        .collect();

    let results: Vec<_> = pairs
        .par_iter()
        .map(|(cand, ev)| {
            let req = RelationRequest {
                frame_index: ev.frame.slot.index,
                feature: &ev.frame.augmented,
                context: &ev.context.text,
                subject: EntityRef::from(subject),
                relation: &subquery.relation,
                candidate: EntityRef::from(*cand),
                prompt: RELATION_PROMPT,
            };
            backend::relation_score(backend, &req)
                .map(|s| ((cand.entity_id.clone(), ev.selected.rank), s))
                .map_err(|source| Error::RelationScoring {
                    candidate: cand.entity_id.clone(),
                    rank: ev.selected.rank,
                    source,
                })
        })
        .collect();

    let entries = results.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
    Ok(ScoreTable {
        subquery: subquery.clone(),
        entries,
    })
}

/// Per-option score on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QaScore {
    pub option_index: usize,
    pub score: f64,
}

/// Multiple-choice scoring: for each frame, one score per option given the
/// full question and option list. Output is ordered by frame, then option.
pub fn score_qa<B: ScorerBackend + ?Sized>(
    evidence: &[FrameEvidence<'_>],
    question: &str,
    options: &[String],
    backend: &B,
) -> Result<Vec<Vec<QaScore>>> {
    if options.is_empty() {
        return Err(Error::Validation("question has no options".into()));
    }
    let results: Vec<_> = evidence
        .par_iter()
        .map(|ev| {
            let req = QaRequest {
                frame_index: ev.frame.slot.index,
                feature: &ev.frame.augmented,
                context: &ev.context.text,
                question,
                options,
            };
            backend::qa_scores(backend, &req)
                .map(|scores| {
                    scores
                        .into_iter()
                        .enumerate()
                        .map(|(option_index, score)| QaScore { option_index, score })
                        .collect()
                })
                .map_err(|source| Error::QaScoring {
                    frame_index: ev.frame.slot.index,
                    source,
                })
        })
        .collect();
    results.into_iter().collect()
}
