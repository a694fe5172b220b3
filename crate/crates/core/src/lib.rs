//! Query-aware frame localization and relation scoring for long videos.
//!
//! The engine answers structured relation queries ("who is a friend of
//! Ruth?") over a movie that has already been sampled into per-frame
//! detection records. It names detections against anchor embeddings, pools
//! the named entity features into a per-frame representation, asks a
//! [`backend::ScorerBackend`] which frames matter for the queried entity,
//! keeps the top-K, pulls the nearby subtitles, and scores every candidate
//! entity's relation to the queried one. Summed scores become a ranked,
//! confidence-normalized answer.
//!
//! Model inference lives behind the backend trait. The crate ships a
//! deterministic truth-driven mock, a replay backend for recorded scores,
//! and an HTTP client for an external model service.

pub mod backend;
pub mod entity;
pub mod error;
pub mod eval;
pub mod feature;
pub mod ingest;
pub mod query;
pub mod relation;
pub mod select;
pub mod synth;

pub use error::{BackendError, Error, Result};
pub use feature::FeatureVector;
