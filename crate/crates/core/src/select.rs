//! Frame relevance scoring and top-K selection.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::backend::{self, EntityRef, FrameRequest, ScorerBackend, FRAME_PROMPT};
use crate::entity::AugmentedFrame;
use crate::error::{Error, Result};
use crate::ingest::{AnchorEntity, FrameSlot};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameScore {
    pub slot: FrameSlot,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectedFrame {
    pub slot: FrameSlot,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Asks the backend how strongly each frame relates to `entity`, using the
/// frame-selection prompt. Calls run in parallel; output follows input
/// order. The first failing frame (in input order) is reported.
pub fn score_frames<B: ScorerBackend + ?Sized>(
    frames: &[AugmentedFrame],
    entity: &AnchorEntity,
    backend: &B,
) -> Result<Vec<FrameScore>> {
    if frames.is_empty() {
        return Err(Error::Validation("no frames to score".into()));
    }
    let results: Vec<_> = frames
        .par_iter()
        .map(|f| {
            let req = FrameRequest {
                frame_index: f.slot.index,
                feature: &f.augmented,
                entity: EntityRef::from(entity),
                prompt: FRAME_PROMPT,
            };
            backend::frame_score(backend, &req)
                .map(|score| FrameScore { slot: f.slot, score })
                .map_err(|source| Error::FrameScoring {
                    frame_index: f.slot.index,
                    source,
                })
        })
        .collect();
    results.into_iter().collect()
}

/// Total order used for selection: higher score first, then earlier
/// timestamp, then lower frame index.
fn selection_order(a: &FrameScore, b: &FrameScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.slot.timestamp_s.total_cmp(&b.slot.timestamp_s))
        .then(a.slot.index.cmp(&b.slot.index))
}

/// Keeps the `k` highest-scoring frames, ranked from 1.
pub fn select_top_k(scores: &[FrameScore], k: usize) -> Vec<SelectedFrame> {
    let mut ordered = scores.to_vec();
    ordered.sort_by(selection_order);
    ordered
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, s)| SelectedFrame {
            slot: s.slot,
            score: s.score,
            rank: i + 1,
        })
        .collect()
}
