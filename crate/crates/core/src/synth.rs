//! Seeded synthetic movies with a planted relation graph.
//!
//! A generated movie has well-separated unit anchor embeddings, frame
//! records whose detections are noisy copies of those anchors, subtitles
//! naming the entities that share a scene, a [`MockTruth`] describing who
//! is visible where and which triples hold, and a set of graph queries with
//! their gold answers. With zero noise the truth-driven mock backend must
//! answer every query correctly, which makes the whole pipeline checkable
//! end to end.
//!
//! Construction guarantees:
//! * every `(subject, relation)` pair has at most one object, so the gold
//!   entity is the only candidate any subquery can score positively;
//! * every edge gets its own scene frame where subject and object appear
//!   together;
//! * no entity appears in more than `max_appearances` frames, so a frame
//!   selector keeping at least that many frames sees every scene.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::backend::MockTruth;
use crate::entity::cosine_similarity;
use crate::error::{Error, Result};
use crate::eval::{write_gold, Gold, GoldRecord};
use crate::feature::FeatureVector;
use crate::ingest::{
    render_srt, write_anchors, write_frame_records, write_ontology, AnchorEntity, AnchorRegistry,
    Detection, FrameRecord, FrameSlot, MovieBundle, Ontology, SubtitleCue,
};
use crate::query::{write_graph_queries, Condition, GraphQuery};

const PERSON_NAMES: &[&str] = &[
    "Ruth", "Carol", "Willis", "Anna", "Marcus", "Ivy", "Theo", "Lena", "Oscar", "Nadia",
    "Felix", "June", "Victor", "Hazel", "Simon", "Clara", "Hugo", "Mira",
];
const LOCATION_NAMES: &[&str] = &["Home", "Harbor", "Diner", "Studio", "Chapel", "Garage"];
const RELATIONS: &[&str] = &[
    "friend_of",
    "sibling_of",
    "works_with",
    "mentor_of",
    "rival_of",
    "married_to",
    "neighbor_of",
    "socialises_at",
    "apprentice_of",
    "employs",
];
const SCENE_LINES: &[&str] = &[
    "{a} and {b} talk quietly.",
    "{a} waves at {b}.",
    "\"{b}, wait for me,\" says {a}.",
    "{a} hands {b} the letter.",
    "{b} laughs at something {a} said.",
];
const FILLER_LINES: &[&str] = &[
    "It is getting late.",
    "Did you hear that?",
    "The rain will not stop.",
    "We should go.",
    "Nobody answered the door.",
    "Turn the lights off.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_frames: usize,
    pub dim: usize,
    pub sampling_period_s: f64,
    /// Per-component standard deviation of the noise added to detection
    /// features before re-normalization.
    pub noise_sigma: f64,
    pub n_relations: usize,
    pub n_queries: usize,
    pub seed: u64,
    /// Upper bound on pairwise anchor cosine similarity.
    pub separation: f64,
    /// Incoming edges per entity.
    pub in_degree: usize,
    /// Cap on the number of frames any entity appears in.
    pub max_appearances: usize,
    /// Probability that a frame also holds an unnameable distractor.
    pub distractor_rate: f64,
    pub movie_id: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_entities: 8,
            n_frames: 200,
            dim: 16,
            sampling_period_s: 1.0,
            noise_sigma: 0.0,
            n_relations: 6,
            n_queries: 50,
            seed: 7,
            separation: 0.3,
            in_degree: 3,
            max_appearances: 8,
            distractor_rate: 0.1,
            movie_id: "synthetic".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth spec: {m}")));
        if self.n_entities < 2 {
            return bad("need at least 2 entities");
        }
        if self.dim < 2 {
            return bad("feature dimension must be at least 2");
        }
        if self.n_frames == 0 {
            return bad("need at least one frame");
        }
        if self.sampling_period_s <= 0.0 || !self.sampling_period_s.is_finite() {
            return bad("sampling period must be positive");
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return bad("noise sigma must be finite and non-negative");
        }
        if self.n_relations == 0 {
            return bad("need at least one relation");
        }
        if !(self.separation > -1.0 && self.separation <= 1.0) {
            return bad("separation must lie in (-1, 1]");
        }
        if self.in_degree == 0 || self.max_appearances == 0 {
            return bad("in_degree and max_appearances must be positive");
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return bad("distractor rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Everything generated for one synthetic movie.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMovie {
    pub spec: SynthSpec,
    pub bundle: MovieBundle,
    pub truth: MockTruth,
    pub queries: Vec<GraphQuery>,
    pub gold: Vec<GoldRecord>,
}

/// File locations written by [`SynthMovie::write_to`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPaths {
    pub features: PathBuf,
    pub subtitles: PathBuf,
    pub anchors: PathBuf,
    pub ontology: PathBuf,
    pub truth: PathBuf,
    pub queries: PathBuf,
    pub gold: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            features: dir.join("features.jsonl"),
            subtitles: dir.join("subtitles.srt"),
            anchors: dir.join("anchors.json"),
            ontology: dir.join("ontology.json"),
            truth: dir.join("truth.json"),
            queries: dir.join("queries.json"),
            gold: dir.join("gold.json"),
        }
    }
}

impl SynthMovie {
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<SynthPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths::in_dir(dir);
        write_frame_records(&paths.features, &self.bundle.frames)?;
        std::fs::write(&paths.subtitles, render_srt(&self.bundle.cues))
            .map_err(|e| Error::io(&paths.subtitles, e))?;
        write_anchors(&paths.anchors, &self.bundle.anchors)?;
        write_ontology(&paths.ontology, &self.bundle.ontology)?;
        self.truth.save(&paths.truth)?;
        write_graph_queries(&paths.queries, &self.queries)?;
        write_gold(&paths.gold, &self.gold)?;
        Ok(paths)
    }

    pub fn gold_for(&self, query_id: &str) -> Option<&str> {
        self.gold.iter().find(|g| g.query_id == query_id).and_then(|g| match &g.gold {
            Gold::Entity(e) => Some(e.as_str()),
            Gold::Option(_) => None,
        })
    }
}

struct Edge {
    subject: usize,
    relation: usize,
    object: usize,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> FeatureVector {
    loop {
        let v: FeatureVector = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>().into();
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

fn separated_vector(
    rng: &mut ChaCha8Rng,
    dim: usize,
    others: &[&FeatureVector],
    bound: f64,
    attempts: usize,
) -> Option<FeatureVector> {
    (0..attempts).find_map(|_| {
        let v = unit_gaussian(rng, dim);
        others
            .iter()
            .all(|o| cosine_similarity(&v, o).is_ok_and(|s| s <= bound))
            .then_some(v)
    })
}

fn entity_names(n: usize) -> Vec<(String, String, &'static str)> {
    let (mut p, mut l) = (0usize, 0usize);
    (0..n)
        .map(|i| {
            let (name, ty) = if i % 4 == 3 {
                l += 1;
                (pick_name(LOCATION_NAMES, l - 1), "location")
            } else {
                p += 1;
                (pick_name(PERSON_NAMES, p - 1), "person")
            };
            (name.to_lowercase(), name, ty)
        })
        .collect()
}

fn pick_name(pool: &[&str], i: usize) -> String {
    if i < pool.len() {
        pool[i].to_string()
    } else {
        format!("{}{}", pool[i % pool.len()], i / pool.len() + 1)
    }
}

fn relation_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match RELATIONS.get(i) {
            Some(r) => r.to_string(),
            None => format!("relation_{i}"),
        })
        .collect()
}

/// Builds a synthetic movie from `spec`. Identical specs give identical
/// movies.
pub fn generate(spec: &SynthSpec) -> Result<SynthMovie> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_entities;
    let p = spec.sampling_period_s;

    let names = entity_names(n);
    let relations = relation_names(spec.n_relations);

    let mut anchor_feats: Vec<FeatureVector> = Vec::with_capacity(n);
    for (id, ..) in &names {
        let others: Vec<&FeatureVector> = anchor_feats.iter().collect();
        let v = separated_vector(&mut rng, spec.dim, &others, spec.separation, 10_000).ok_or_else(|| {
            Error::Generation(format!(
                "could not place anchor {id:?} with pairwise cosine <= {} in {} dimensions",
                spec.separation, spec.dim
            ))
        })?;
        anchor_feats.push(v);
    }
    let anchors = AnchorRegistry::new(
        spec.dim,
        names
            .iter()
            .zip(&anchor_feats)
            .map(|((id, name, ty), f)| AnchorEntity {
                entity_id: id.clone(),
                name: name.clone(),
                entity_type: ty.to_string(),
                feature: f.clone(),
            })
            .collect(),
    )?;
    let mut entity_types: Vec<String> = vec!["person".into()];
    if n > 3 {
        entity_types.push("location".into());
    }
    let ontology = Ontology {
        relations: relations.clone(),
        entity_types,
    };

    // Relation graph: each object gets `in_degree` subjects, preferring
    // subjects with few outgoing edges; (subject, relation) stays unique.
    let in_degree = spec.in_degree.min(n - 1);
    let mut out_degree = vec![0usize; n];
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut edges: Vec<Edge> = Vec::new();
    for object in 0..n {
        let mut subjects: Vec<(usize, u32, usize)> = (0..n)
            .filter(|&s| s != object)
            .map(|s| (out_degree[s], rng.random::<u32>(), s))
            .collect();
        subjects.sort();
        for &(_, _, subject) in subjects.iter().take(in_degree) {
            let free: Vec<usize> = (0..relations.len())
                .filter(|r| !used.contains(&(subject, *r)))
                .collect();
            let &relation = free.choose(&mut rng).ok_or_else(|| {
                Error::Generation(format!(
                    "entity {:?} ran out of relations; raise n_relations",
                    names[subject].0
                ))
            })?;
            used.insert((subject, relation));
            out_degree[subject] += 1;
            edges.push(Edge {
                subject,
                relation,
                object,
            });
        }
    }

    // One scene frame per edge.
    if edges.len() > spec.n_frames {
        return Err(Error::Generation(format!(
            "{} co-occurrence scenes needed but only {} frames",
            edges.len(),
            spec.n_frames
        )));
    }
    let mut frame_order: Vec<usize> = (0..spec.n_frames).collect();
    frame_order.shuffle(&mut rng);
    let mut presence: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut appearances = vec![0usize; n];
    let mut scenes: Vec<(usize, usize, usize)> = Vec::new();
    for (edge, &frame) in edges.iter().zip(&frame_order) {
        presence.entry(frame).or_default().extend([edge.subject, edge.object]);
        appearances[edge.subject] += 1;
        appearances[edge.object] += 1;
        scenes.push((frame, edge.subject, edge.object));
    }
    if let Some(e) = (0..n).find(|&e| appearances[e] > spec.max_appearances) {
        return Err(Error::Generation(format!(
            "entity {:?} needs {} scenes, above max_appearances {}",
            names[e].0, appearances[e], spec.max_appearances
        )));
    }
    // A solo appearance per entity on a free frame, when the cap allows.
    let mut free_frames = frame_order[edges.len()..].iter().copied();
    for (e, count) in appearances.iter_mut().enumerate() {
        if *count < spec.max_appearances {
            if let Some(f) = free_frames.next() {
                presence.entry(f).or_default().insert(e);
                *count += 1;
            }
        }
    }

    let entity_ids: Vec<String> = names.iter().map(|(id, ..)| id.clone()).collect();
    let mut frames = Vec::with_capacity(spec.n_frames);
    for i in 0..spec.n_frames {
        let mut detections = Vec::new();
        for &e in presence.get(&i).into_iter().flatten() {
            detections.push(Detection {
                bbox: random_bbox(&mut rng),
                feature: noisy_copy(&mut rng, &anchor_feats[e], spec.noise_sigma),
            });
        }
        if rng.random::<f64>() < spec.distractor_rate {
            let all: Vec<&FeatureVector> = anchor_feats.iter().collect();
            if let Some(f) = separated_vector(&mut rng, spec.dim, &all, spec.separation, 1_000) {
                detections.push(Detection {
                    bbox: random_bbox(&mut rng),
                    feature: f,
                });
            }
        }
        frames.push(FrameRecord {
            slot: FrameSlot::new(i, i as f64 * p),
            frame_feature: Some(unit_gaussian(&mut rng, spec.dim)),
            detections,
        });
    }

    let cues = subtitles(&mut rng, spec, &scenes, &names);

    let mut truth = MockTruth::default();
    for (f, ids) in &presence {
        truth
            .presence
            .insert(*f, ids.iter().map(|&e| entity_ids[e].clone()).collect());
    }
    for e in &edges {
        truth.add_edge(&entity_ids[e.subject], &relations[e.relation], &entity_ids[e.object]);
    }

    let (queries, gold) = queries(&mut rng, spec, &edges, &names, &relations);
    let bundle = MovieBundle::new(frames, cues, anchors, ontology)?;
    Ok(SynthMovie {
        spec: spec.clone(),
        bundle,
        truth,
        queries,
        gold,
    })
}

fn random_bbox(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let x0 = (rng.random::<f64>() * 1000.0).round();
    let y0 = (rng.random::<f64>() * 600.0).round();
    let w = (rng.random::<f64>() * 300.0).round() + 20.0;
    let h = (rng.random::<f64>() * 300.0).round() + 20.0;
    [x0, y0, x0 + w, y0 + h]
}

fn noisy_copy(rng: &mut ChaCha8Rng, anchor: &FeatureVector, sigma: f64) -> FeatureVector {
    if sigma == 0.0 {
        return anchor.clone();
    }
    let noisy: FeatureVector = anchor
        .as_slice()
        .iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect::<Vec<_>>()
        .into();
    noisy.normalized().unwrap_or_else(|| anchor.clone())
}

fn subtitles(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    scenes: &[(usize, usize, usize)],
    names: &[(String, String, &'static str)],
) -> Vec<SubtitleCue> {
    let period_ms = (spec.sampling_period_s * 1000.0).round() as u64;
    let cue_ms = (period_ms * 4 / 5).clamp(1, 2000);
    let mut timed: Vec<(u64, u64, String)> = scenes
        .iter()
        .map(|&(frame, a, b)| {
            let start = frame as u64 * period_ms;
            let line = SCENE_LINES
                .choose(rng)
                .expect("non-empty")
                .replace("{a}", &names[a].1)
                .replace("{b}", &names[b].1);
            (start, start + cue_ms, line)
        })
        .collect();
    let duration_ms = (spec.n_frames as u64 - 1) * period_ms;
    for _ in 0..spec.n_frames / 10 {
        let start = rng.random_range(0..=duration_ms);
        let line = FILLER_LINES.choose(rng).expect("non-empty").to_string();
        timed.push((start, start + cue_ms, line));
    }
    timed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    timed
        .into_iter()
        .enumerate()
        .map(|(i, (s, e, text))| SubtitleCue {
            ordinal: i as u32 + 1,
            start_s: s as f64 / 1000.0,
            end_s: e as f64 / 1000.0,
            text,
        })
        .collect()
}

fn queries(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    edges: &[Edge],
    names: &[(String, String, &'static str)],
    relations: &[String],
) -> (Vec<GraphQuery>, Vec<GoldRecord>) {
    let object_of: BTreeMap<(usize, usize), usize> =
        edges.iter().map(|e| ((e.subject, e.relation), e.object)).collect();
    let objects: Vec<usize> = edges
        .iter()
        .map(|e| e.object)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut queries = Vec::with_capacity(spec.n_queries);
    let mut gold = Vec::with_capacity(spec.n_queries);
    for q in 0..spec.n_queries {
        let &g = objects.choose(rng).expect("every entity has incoming edges");
        let mut incoming: Vec<&Edge> = edges.iter().filter(|e| e.object == g).collect();
        incoming.shuffle(rng);
        let take = rng.random_range(1..=incoming.len().min(3));
        let chosen = &incoming[..take];
        let mut conditions: Vec<Condition> = chosen
            .iter()
            .map(|e| Condition::known(&relations[e.relation], &names[e.subject].0))
            .collect();

        // Optionally a blank-side condition whose relation, paired with
        // each known entity, points at the gold entity or at nothing.
        if rng.random::<f64>() < 0.3 {
            let safe: Vec<usize> = (0..relations.len())
                .filter(|&r| {
                    chosen
                        .iter()
                        .all(|e| object_of.get(&(e.subject, r)).is_none_or(|&o| o == g))
                })
                .collect();
            if let Some(&r) = safe.choose(rng) {
                let at = rng.random_range(0..=conditions.len());
                conditions.insert(at, Condition::blank(&relations[r]));
            }
        }

        let query_id = format!("q{q:03}");
        queries.push(GraphQuery {
            query_id: query_id.clone(),
            conditions,
            blank_type: names[g].2.to_string(),
        });
        gold.push(GoldRecord {
            query_id,
            movie_id: Some(spec.movie_id.clone()),
            gold: Gold::Entity(names[g].0.clone()),
        });
    }
    (queries, gold)
}
