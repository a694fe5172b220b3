use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::FrameSlot;
use super::srt::{parse_srt, SubtitleCue};
use crate::error::{Error, Result};
use crate::feature::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// `[x0, y0, x1, y1]` in pixels.
    pub bbox: [f64; 4],
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub slot: FrameSlot,
    pub frame_feature: Option<FeatureVector>,
    pub detections: Vec<Detection>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecordLine {
    frame_index: usize,
    timestamp_s: f64,
    #[serde(default)]
    frame_feature: Option<FeatureVector>,
    #[serde(default)]
    detections: Vec<Detection>,
}

impl From<FrameRecordLine> for FrameRecord {
    fn from(l: FrameRecordLine) -> Self {
        FrameRecord {
            slot: FrameSlot::new(l.frame_index, l.timestamp_s),
            frame_feature: l.frame_feature,
            detections: l.detections,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEntity {
    pub entity_id: String,
    pub name: String,
    pub entity_type: String,
    pub feature: FeatureVector,
}

/// Anchor entities keyed by id, all sharing one declared feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorRegistry {
    dim: usize,
    entities: Vec<AnchorEntity>,
    by_id: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct AnchorFile {
    dim: usize,
    entities: Vec<AnchorEntity>,
}

impl AnchorRegistry {
    pub fn new(dim: usize, entities: Vec<AnchorEntity>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("anchor dimension must be positive".into()));
        }
        let mut by_id = BTreeMap::new();
        for (i, e) in entities.iter().enumerate() {
            if e.entity_id.trim().is_empty() {
                return Err(Error::Validation(format!("anchor #{i} has an empty entity_id")));
            }
            if by_id.insert(e.entity_id.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate entity_id {:?}",
                    e.entity_id
                )));
            }
            if e.feature.dim() != dim {
                return Err(Error::Validation(format!(
                    "dimension mismatch: anchor {:?} has dim {}, registry declares {dim}",
                    e.entity_id,
                    e.feature.dim()
                )));
            }
            if !e.feature.is_finite() || e.feature.norm() == 0.0 {
                return Err(Error::Validation(format!(
                    "anchor {:?} feature must be finite with non-zero norm",
                    e.entity_id
                )));
            }
        }
        Ok(Self {
            dim,
            entities,
            by_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, entity_id: &str) -> Option<&AnchorEntity> {
        self.by_id.get(entity_id).map(|&i| &self.entities[i])
    }

    pub fn contains(&self, entity_id: &str) -> bool {
        self.by_id.contains_key(entity_id)
    }

    /// Entities in file order.
    pub fn entities(&self) -> &[AnchorEntity] {
        &self.entities
    }

    /// Entities in ascending `entity_id` order.
    pub fn sorted(&self) -> impl Iterator<Item = &AnchorEntity> {
        self.by_id.values().map(|&i| &self.entities[i])
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ontology {
    pub relations: Vec<String>,
    pub entity_types: Vec<String>,
}

impl Ontology {
    pub fn validate(&self) -> Result<()> {
        for (what, names) in [("relation", &self.relations), ("entity type", &self.entity_types)] {
            let mut seen = HashSet::new();
            for n in names {
                if n.trim().is_empty() {
                    return Err(Error::Validation(format!("ontology has an empty {what} name")));
                }
                if !seen.insert(n.as_str()) {
                    return Err(Error::Validation(format!("ontology repeats {what} {n:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn has_relation(&self, r: &str) -> bool {
        self.relations.iter().any(|x| x == r)
    }

    pub fn has_entity_type(&self, t: &str) -> bool {
        self.entity_types.iter().any(|x| x == t)
    }
}

/// Every input for one movie, cross-validated.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieBundle {
    pub frames: Vec<FrameRecord>,
    pub cues: Vec<SubtitleCue>,
    pub anchors: AnchorRegistry,
    pub ontology: Ontology,
}

impl MovieBundle {
    pub fn new(
        frames: Vec<FrameRecord>,
        cues: Vec<SubtitleCue>,
        anchors: AnchorRegistry,
        ontology: Ontology,
    ) -> Result<Self> {
        let bundle = Self {
            frames,
            cues,
            anchors,
            ontology,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        self.ontology.validate()?;
        if self.frames.is_empty() {
            return Err(Error::Validation("empty movie: no frame records".into()));
        }
        for a in self.anchors.entities() {
            if !self.ontology.has_entity_type(&a.entity_type) {
                return Err(Error::Validation(format!(
                    "anchor {:?} has unknown entity_type {:?}",
                    a.entity_id, a.entity_type
                )));
            }
        }

        let dim = self.anchors.dim();
        let mut prev: Option<FrameSlot> = None;
        for f in &self.frames {
            let idx = f.slot.index;
            let t = f.slot.timestamp_s;
            if t < 0.0 || !t.is_finite() {
                return Err(Error::Validation(format!(
                    "frame {idx}: timestamp {t} must be finite and non-negative"
                )));
            }
            if let Some(p) = prev {
                if idx <= p.index || t <= p.timestamp_s {
                    return Err(Error::Validation(format!(
                        "frame {idx}: index and timestamp must strictly increase (previous frame {} at {}s)",
                        p.index, p.timestamp_s
                    )));
                }
            }
            prev = Some(f.slot);

            if let Some(ff) = &f.frame_feature {
                check_feature(ff, dim, idx, "frame_feature")?;
            }
            for (j, d) in f.detections.iter().enumerate() {
                check_feature(&d.feature, dim, idx, &format!("detection {j}"))?;
                let [x0, y0, x1, y1] = d.bbox;
                if !(x0 <= x1 && y0 <= y1) {
                    return Err(Error::Validation(format!(
                        "frame {idx}: detection {j} has inverted bbox {:?}",
                        d.bbox
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that frame timestamps sit on the `index × period` grid.
    pub fn check_sampling_period(&self, period_s: f64) -> Result<()> {
        for f in &self.frames {
            let expected = f.slot.index as f64 * period_s;
            if (f.slot.timestamp_s - expected).abs() > 1e-6 * expected.max(1.0) {
                return Err(Error::Validation(format!(
                    "frame {}: timestamp {}s is off the {}s sampling grid (expected {}s)",
                    f.slot.index, f.slot.timestamp_s, period_s, expected
                )));
            }
        }
        Ok(())
    }

    /// Position of the frame with the given index.
    pub fn frame_position(&self, frame_index: usize) -> Option<usize> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.slot.index)
            .ok()
    }
}

fn check_feature(f: &FeatureVector, dim: usize, frame: usize, what: &str) -> Result<()> {
    if f.dim() != dim {
        return Err(Error::Validation(format!(
            "dimension mismatch at frame {frame}: {what} has dim {}, anchors declare {dim}",
            f.dim()
        )));
    }
    if !f.is_finite() {
        return Err(Error::Validation(format!(
            "frame {frame}: {what} contains non-finite values"
        )));
    }
    Ok(())
}

pub fn read_frame_records(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?;
        out.push(rec.into());
    }
    Ok(out)
}

pub fn write_frame_records(path: impl AsRef<Path>, frames: &[FrameRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for f in frames {
        let line = FrameRecordLine {
            frame_index: f.slot.index,
            timestamp_s: f.slot.timestamp_s,
            frame_feature: f.frame_feature.clone(),
            detections: f.detections.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::json(path.display().to_string(), e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_anchors(path: impl AsRef<Path>) -> Result<AnchorRegistry> {
    let file: AnchorFile = read_json(path.as_ref())?;
    AnchorRegistry::new(file.dim, file.entities)
}

pub fn write_anchors(path: impl AsRef<Path>, anchors: &AnchorRegistry) -> Result<()> {
    let file = AnchorFile {
        dim: anchors.dim(),
        entities: anchors.entities().to_vec(),
    };
    write_json(path.as_ref(), &file)
}

pub fn read_ontology(path: impl AsRef<Path>) -> Result<Ontology> {
    let o: Ontology = read_json(path.as_ref())?;
    o.validate()?;
    Ok(o)
}

pub fn write_ontology(path: impl AsRef<Path>, ontology: &Ontology) -> Result<()> {
    write_json(path.as_ref(), ontology)
}

/// Loads and cross-validates a movie's feature records, subtitles, anchors
/// and ontology.
pub fn load_movie_bundle(
    feature_path: impl AsRef<Path>,
    subtitle_path: impl AsRef<Path>,
    anchor_path: impl AsRef<Path>,
    ontology_path: impl AsRef<Path>,
) -> Result<MovieBundle> {
    let frames = read_frame_records(feature_path)?;
    let subtitle_path = subtitle_path.as_ref();
    let srt = fs::read_to_string(subtitle_path).map_err(|e| Error::io(subtitle_path, e))?;
    let cues = parse_srt(&srt)?;
    let anchors = read_anchors(anchor_path)?;
    let ontology = read_ontology(ontology_path)?;
    MovieBundle::new(frames, cues, anchors, ontology)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
