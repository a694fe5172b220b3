//! Naming detections against anchor embeddings, and attention-pooling the
//! named entity features into one augmented feature per frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FeatureVector;
use crate::ingest::{AnchorRegistry, Detection, FrameRecord, FrameSlot};

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::UndefinedSimilarity(format!(
            "dimension mismatch ({} vs {})",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity("zero-norm vector".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedDetection {
    pub entity_id: String,
    pub similarity: f64,
    pub detection: Detection,
}

/// Assigns each detection to its most similar anchor and drops those whose
/// best similarity falls below `threshold`. Equal similarities go to the
/// lexicographically smaller entity id. Zero-norm detections cannot be
/// named and are dropped.
pub fn name_detections(
    frame: &FrameRecord,
    anchors: &AnchorRegistry,
    threshold: f64,
) -> Vec<NamedDetection> {
    frame
        .detections
        .iter()
        .filter_map(|det| {
            let mut best: Option<(&str, f64)> = None;
            // `sorted` walks ids in ascending order, so a strict `>` keeps
            // the smaller id on ties.
            for anchor in anchors.sorted() {
                let Ok(sim) = cosine_similarity(&anchor.feature, &det.feature) else {
                    continue;
                };
                if best.is_none_or(|(_, s)| sim > s) {
                    best = Some((&anchor.entity_id, sim));
                }
            }
            let (id, sim) = best?;
            (sim >= threshold).then(|| NamedDetection {
                entity_id: id.to_string(),
                similarity: sim,
                detection: det.clone(),
            })
        })
        .collect()
}

/// Linear maps for attention pooling and frame augmentation.
///
/// `attention` projects an entity feature (dim `d`) to one logit.
/// `augment` is a `d × 2d` matrix applied to `[frame feature ; pooled]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingWeights {
    dim: usize,
    attention: Vec<f64>,
    augment: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    dim: usize,
    w_p: Vec<Vec<f64>>,
    w_a: Vec<Vec<f64>>,
}

impl PoolingWeights {
    pub fn new(dim: usize, attention: Vec<f64>, augment: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("pooling weights need dim > 0".into()));
        }
        if attention.len() != dim {
            return Err(Error::InvalidConfig(format!(
                "attention projection has {} columns, expected {dim}",
                attention.len()
            )));
        }
        if augment.len() != dim || augment.iter().any(|row| row.len() != 2 * dim) {
            return Err(Error::InvalidConfig(format!(
                "augmentation projection must be {dim} x {}",
                2 * dim
            )));
        }
        if attention.iter().chain(augment.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("pooling weights must be finite".into()));
        }
        Ok(Self {
            dim,
            attention,
            augment,
        })
    }

    /// Uniform attention (zero projection) and `[I I]` augmentation, so the
    /// augmented feature is the frame feature plus the mean entity feature.
    pub fn identity(dim: usize) -> Self {
        let augment = (0..dim)
            .map(|r| {
                let mut row = vec![0.0; 2 * dim];
                row[r] = 1.0;
                row[dim + r] = 1.0;
                row
            })
            .collect();
        Self {
            dim,
            attention: vec![0.0; dim],
            augment,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn attention(&self) -> &[f64] {
        &self.attention
    }

    pub fn augment(&self) -> &[Vec<f64>] {
        &self.augment
    }

    /// Reads `{"dim": d, "w_p": [[..d..]], "w_a": [[..2d..] × d]}`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: WeightsFile = crate::ingest::read_json(path.as_ref())?;
        let [row] = <[Vec<f64>; 1]>::try_from(file.w_p).map_err(|rows| {
            Error::InvalidConfig(format!(
                "w_p must hold exactly one row, found {}",
                rows.len()
            ))
        })?;
        Self::new(file.dim, row, file.w_a)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = WeightsFile {
            dim: self.dim,
            w_p: vec![self.attention.clone()],
            w_a: self.augment.clone(),
        };
        crate::ingest::write_json(path.as_ref(), &file)
    }
}

/// A frame after naming and pooling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedFrame {
    pub slot: FrameSlot,
    pub named: Vec<NamedDetection>,
    /// Softmax attention over `named`, same order.
    pub attention: Vec<f64>,
    pub pooled: FeatureVector,
    pub augmented: FeatureVector,
}

impl AugmentedFrame {
    pub fn contains(&self, entity_id: &str) -> bool {
        self.named.iter().any(|n| n.entity_id == entity_id)
    }
}

/// Attention-pools the named entity features of a frame and projects the
/// concatenation `[frame feature ; pooled]` through the augmentation map.
/// A missing frame-level feature is treated as the zero vector, and a frame
/// with nothing named pools to zero.
pub fn pool_and_augment(
    frame: &FrameRecord,
    named: Vec<NamedDetection>,
    weights: &PoolingWeights,
) -> Result<AugmentedFrame> {
    let d = weights.dim();
    if let Some(bad) = named.iter().find(|n| n.detection.feature.dim() != d) {
        return Err(Error::Validation(format!(
            "frame {}: entity {} feature has dim {}, pooling weights expect {d}",
            frame.slot.index,
            bad.entity_id,
            bad.detection.feature.dim()
        )));
    }
    if let Some(ff) = &frame.frame_feature {
        if ff.dim() != d {
            return Err(Error::Validation(format!(
                "frame {}: frame_feature has dim {}, pooling weights expect {d}",
                frame.slot.index,
                ff.dim()
            )));
        }
    }

    let logits: Vec<f64> = named
        .iter()
        .map(|n| dot(&weights.attention, n.detection.feature.as_slice()))
        .collect();
    let attention = softmax(&logits);

    let mut pooled = vec![0.0; d];
    for (alpha, n) in attention.iter().zip(&named) {
        for (acc, v) in pooled.iter_mut().zip(n.detection.feature.as_slice()) {
            *acc += alpha * v;
        }
    }

    let zero = FeatureVector::zeros(d);
    let frame_feature = frame.frame_feature.as_ref().unwrap_or(&zero);
    let augmented = weights
        .augment
        .iter()
        .map(|row| {
            let (left, right) = row.split_at(d);
            dot(left, frame_feature.as_slice()) + dot(right, &pooled)
        })
        .collect::<Vec<_>>();

    Ok(AugmentedFrame {
        slot: frame.slot,
        named,
        attention,
        pooled: pooled.into(),
        augmented: augmented.into(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let Some(max) = logits.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
