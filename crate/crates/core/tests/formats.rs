use std::fs;

use serde_json::json;

use vidrel_core::ingest::{load_movie_bundle, parse_srt, render_srt, SubtitleCue};
use vidrel_core::Error;

const CORPUS_CRLF: &str = "1\r\n00:00:01,000 --> 00:00:02,500\r\nHello\r\n\r\n2\r\n00:00:02,000 --> 00:00:04,000\r\nOverlapping line\r\n\r\n";
const CORPUS_MULTILINE: &str = "\u{feff}1\n01:00:00,000 --> 01:00:05,250\nA\nB\n\n\n\n2\n01:00:03,000 --> 01:00:03,001\n- Who's there?\n- Me.\n";
const CORPUS_OVERLAP: &str = "1\n00:00:10,000 --> 00:00:20,000\nlong cue\n\n2\n00:00:12,000 --> 00:00:13,000\nnested cue\n\n3\n00:00:11,000 --> 00:00:30,000 X1:0 X2:10\nstarts earlier\n";

fn cue(ordinal: u32, start_s: f64, end_s: f64, text: &str) -> SubtitleCue {
    SubtitleCue {
        ordinal,
        start_s,
        end_s,
        text: text.into(),
    }
}

#[test]
fn corpus_parses_as_expected() {
    assert_eq!(parse_srt("").unwrap(), vec![]);
    assert_eq!(
        parse_srt(CORPUS_CRLF).unwrap(),
        vec![cue(1, 1.0, 2.5, "Hello"), cue(2, 2.0, 4.0, "Overlapping line")]
    );
    assert_eq!(
        parse_srt(CORPUS_MULTILINE).unwrap(),
        vec![cue(1, 3600.0, 3605.25, "A B"), cue(2, 3603.0, 3603.001, "- Who's there? - Me.")]
    );
    assert_eq!(
        parse_srt(CORPUS_OVERLAP).unwrap(),
        vec![
            cue(1, 10.0, 20.0, "long cue"),
            cue(2, 12.0, 13.0, "nested cue"),
            cue(3, 11.0, 30.0, "starts earlier"),
        ]
    );
}

#[test]
fn corpus_round_trips_through_canonical_form() {
    for text in [CORPUS_CRLF, CORPUS_MULTILINE, CORPUS_OVERLAP] {
        let cues = parse_srt(text).unwrap();
        let canonical = render_srt(&cues);
        assert_eq!(parse_srt(&canonical).unwrap(), cues);
        assert_eq!(render_srt(&parse_srt(&canonical).unwrap()), canonical);
    }
    assert_eq!(
        render_srt(&parse_srt(CORPUS_MULTILINE).unwrap()),
        "1\n01:00:00,000 --> 01:00:05,250\nA B\n\n2\n01:00:03,000 --> 01:00:03,001\n- Who's there? - Me.\n\n"
    );
}

#[test]
fn malformed_timestamp_names_the_block() {
    let text = "1\n00:00:01,000 --> 00:00:02,000\nfine\n\n2\n00:00:0x,000 --> 00:00:03,000\nbroken\n";
    let err = parse_srt(text).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}

struct Files {
    _dir: tempfile::TempDir,
    features: std::path::PathBuf,
    subs: std::path::PathBuf,
    anchors: std::path::PathBuf,
    ontology: std::path::PathBuf,
}

fn write_movie(det_dims: &[usize], anchor_type: &str, n_frames: usize) -> Files {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let features = p("features.jsonl");
    let subs = p("movie.srt");
    let anchors = p("anchors.json");
    let ontology = p("ontology.json");

    let mut lines = String::new();
    for i in 0..n_frames {
        let dim = det_dims.get(i).copied().unwrap_or(8);
        let mut feat = vec![0.0; dim];
        feat[0] = 1.0;
        let rec = json!({
            "frame_index": i,
            "timestamp_s": i as f64,
            "frame_feature": null,
            "detections": [{"bbox": [0.0, 0.0, 10.0, 10.0], "feature": feat}],
        });
        lines.push_str(&rec.to_string());
        lines.push('\n');
    }
    fs::write(&features, lines).unwrap();
    fs::write(&subs, CORPUS_CRLF).unwrap();
    let mut f = vec![0.0; 8];
    f[0] = 1.0;
    fs::write(
        &anchors,
        json!({"dim": 8, "entities": [{"entity_id": "ruth", "name": "Ruth", "entity_type": anchor_type, "feature": f}]})
            .to_string(),
    )
    .unwrap();
    fs::write(
        &ontology,
        json!({"relations": ["friend_of"], "entity_types": ["person", "location"]}).to_string(),
    )
    .unwrap();
    Files {
        _dir: dir,
        features,
        subs,
        anchors,
        ontology,
    }
}

fn load(f: &Files) -> vidrel_core::Result<vidrel_core::ingest::MovieBundle> {
    load_movie_bundle(&f.features, &f.subs, &f.anchors, &f.ontology)
}

#[test]
fn consistent_dimensions_load() {
    let f = write_movie(&[], "person", 5);
    let b = load(&f).unwrap();
    assert_eq!(b.frames.len(), 5);
    assert_eq!(b.cues.len(), 2);
}

#[test]
fn dimension_mismatch_cites_frame_index() {
    let f = write_movie(&[8, 8, 8, 4], "person", 5);
    let err = load(&f).unwrap_err();
    assert!(matches!(err, Error::Validation(_)));
    let msg = err.to_string();
    assert!(msg.contains("dimension mismatch") && msg.contains("frame 3"), "{msg}");
}

#[test]
fn empty_movie_and_unknown_type_rejected() {
    let f = write_movie(&[], "person", 0);
    assert!(load(&f).unwrap_err().to_string().contains("empty movie"));
    let f = write_movie(&[], "vehicle", 3);
    assert!(load(&f).unwrap_err().to_string().contains("vehicle"));
}
