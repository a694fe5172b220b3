//! Loading and validation of everything a run consumes: frame records,
//! subtitles, the anchor registry and the relation ontology.
//!
//! File formats:
//!
//! * frame records: JSON lines, one frame per line,
//!   `{"frame_index": 0, "timestamp_s": 0.0, "frame_feature": [..] | null,
//!     "detections": [{"bbox": [x0, y0, x1, y1], "feature": [..]}]}`
//! * anchors: one JSON document,
//!   `{"dim": d, "entities": [{"entity_id", "name", "entity_type", "feature"}]}`
//! * ontology: one JSON document, `{"relations": [..], "entity_types": [..]}`
//! * subtitles: SubRip.

mod bundle;
pub mod schedule;
pub mod srt;

pub use bundle::{
    load_movie_bundle, read_anchors, read_frame_records, read_ontology, write_anchors,
    write_frame_records, write_ontology, AnchorEntity, AnchorRegistry, Detection, FrameRecord,
    MovieBundle, Ontology,
};
pub(crate) use bundle::{read_json, write_json};
pub use schedule::{build_sampling_schedule, FrameSlot};
pub use srt::{parse_srt, render_srt, SubtitleCue};
