use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn vidrel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidrel"))
        .args(args)
        .current_dir(dir)
        .env_remove("VIDREL_ENDPOINT")
        .env("VIDREL_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const INPUTS: &[&str] = &[
    "--features", "m/features.jsonl", "--subs", "m/subtitles.srt", "--anchors", "m/anchors.json",
    "--ontology", "m/ontology.json",
];

fn movie(dir: &Path) {
    let o = vidrel(dir, &["gen", "--out-dir", "m", "--frames", "120", "--queries", "20", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn run(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd];
    args.extend(INPUTS);
    args.extend(extra);
    vidrel(dir, &args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_run_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    movie(d);
    for f in ["features.jsonl", "subtitles.srt", "anchors.json", "ontology.json", "truth.json", "queries.json", "gold.json", "synth.json"] {
        assert!(d.join("m").join(f).exists(), "{f}");
    }
    let o = run(d, "run", &["--queries", "m/queries.json", "--backend", "mock", "--truth", "m/truth.json", "--out", "ans.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&d.join("ans.json")).as_array().unwrap().len(), 20);
    let manifest = json(&d.join("ans.manifest.json"));
    assert_eq!(manifest["config"]["top_k"], 10);
    assert_eq!(manifest["config"]["backend"], "mock");
    assert!(manifest["created_at"].is_string() && manifest["version"].is_string());

    let o = vidrel(d, &["eval", "--results", "ans.json", "--gold", "m/gold.json", "--task", "graph", "--out", "report.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("Acc@1") && table.contains("Acc@2") && table.contains("Acc@3"), "{table}");
    assert!(table.lines().last().unwrap().contains("100.00"), "{table}");
    assert_eq!(json(&d.join("report.json"))["total"]["metrics"]["acc@1"], 100.0);

    let o = vidrel(d, &["compare", "--clean", "report.json", "--noisy", "report.json", "--out", "delta.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(+0.00)"));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    movie(d);
    fs::write(
        d.join("cfg.toml"),
        "[pipeline]\ntop_k = 4\nvicinity_s = 20.0\n\n[backend]\nkind = \"mock\"\ntruth = \"m/truth.json\"\n",
    )
    .unwrap();
    let o = run(d, "run", &["--queries", "m/queries.json", "--config", "cfg.toml", "--vicinity", "5", "--out", "a.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&d.join("a.manifest.json"));
    assert_eq!(m["config"]["top_k"], 4);
    assert_eq!(m["config"]["vicinity_s"], 5.0);
    assert_eq!(m["config"]["naming_threshold"], 0.5);

    fs::write(d.join("bad.toml"), "[pipeline]\nk = 4\n").unwrap();
    let o = run(d, "run", &["--queries", "m/queries.json", "--config", "bad.toml", "--truth", "m/truth.json", "--out", "b.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_and_validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = vidrel(d, &["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bogus"));
    assert_eq!(vidrel(d, &["frobnicate"]).status.code(), Some(1));
    assert_eq!(vidrel(d, &["--help"]).status.code(), Some(0));

    movie(d);
    // Mock backend without a truth file.
    let o = run(d, "run", &["--queries", "m/queries.json", "--out", "a.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--truth"));
    // Sampling period that does not match the feature timestamps.
    let o = run(d, "run", &["--queries", "m/queries.json", "--truth", "m/truth.json", "--period", "2", "--out", "a.json"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    // Unpaired eval inputs.
    let o = vidrel(d, &["eval", "--results", "x.json", "y.json", "--gold", "m/gold.json"]);
    assert_eq!(o.status.code(), Some(1));
    // Manifest and explicit inputs together.
    let o = vidrel(d, &["run", "--manifest", "x.json", "--features", "m/features.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unreachable_remote_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    movie(d);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}");
    let o = run(d, "run", &["--queries", "m/queries.json", "--backend", "remote", "--endpoint", &endpoint, "--max-attempts", "1", "--out", "a.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unavailable"), "{}", stderr(&o));
    assert!(!d.join("a.json").exists());

    // The endpoint can also come from the environment.
    let mut args = vec!["run"];
    args.extend(INPUTS);
    args.extend(["--queries", "m/queries.json", "--backend", "remote", "--max-attempts", "1", "--out", "a.json"]);
    let o = Command::new(env!("CARGO_BIN_EXE_vidrel"))
        .args(&args)
        .current_dir(d)
        .env("VIDREL_ENDPOINT", &endpoint)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn file_backend_missing_key_policy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    movie(d);
    fs::write(d.join("empty.jsonl"), "").unwrap();
    let strict = run(d, "run", &["--queries", "m/queries.json", "--backend", "file", "--scores", "empty.jsonl", "--out", "a.json"]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(stderr(&strict).contains("frame"), "{}", stderr(&strict));
    let zero = run(d, "run", &["--queries", "m/queries.json", "--backend", "file", "--scores", "empty.jsonl", "--missing", "zero", "--out", "a.json"]);
    assert!(zero.status.success(), "{}", stderr(&zero));
}

#[test]
fn qa_run_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    movie(d);
    let mut truth = json(&d.join("m/truth.json"));
    truth["qa"] = serde_json::json!([
        {"question": "Where does Ruth go?", "option_index": 1, "score": 1.0},
        {"question": "Who calls Carol?", "option_index": 0, "score": 0.3},
        {"question": "Who calls Carol?", "option_index": 2, "score": 0.6}
    ]);
    fs::write(d.join("truth_qa.json"), truth.to_string()).unwrap();
    fs::write(
        d.join("qa.json"),
        r#"[
  {"query_id": "a", "question": "Where does Ruth go?", "options": ["home", "harbor", "diner"], "answer_index": 1},
  {"query_id": "b", "question": "Who calls Carol?", "options": ["ruth", "anna", "ivy"], "answer_index": 0}
]"#,
    )
    .unwrap();
    let o = run(d, "run-qa", &["--queries", "qa.json", "--truth", "truth_qa.json", "--out", "qa_ans.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ans = json(&d.join("qa_ans.json"));
    assert_eq!(ans[0]["chosen_option"], 1);
    assert_eq!(ans[1]["chosen_option"], 2);
    assert_eq!(json(&d.join("qa_ans.manifest.json"))["mode"], "qa");

    let o = vidrel(d, &["eval", "--results", "qa_ans.json", "--gold", "qa.json", "--task", "qa"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).lines().last().unwrap().contains("50.00"), "{}", stdout(&o));

    // A graph manifest cannot drive a QA run.
    let o = run(d, "run", &["--queries", "m/queries.json", "--truth", "m/truth.json", "--out", "g.json"]);
    assert!(o.status.success());
    let o = vidrel(d, &["run-qa", "--manifest", "g.manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn perceived_presence_and_recording() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = vidrel(d, &["gen", "--out-dir", "m", "--frames", "120", "--queries", "20", "--noise", "0.1"]);
    assert!(o.status.success());
    let o = run(d, "run", &["--queries", "m/queries.json", "--truth", "m/truth.json", "--mock-presence", "perceived", "--record", "s.jsonl", "--out", "a.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = fs::read_to_string(d.join("s.jsonl")).unwrap();
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert!(first["op"].is_string() && first["score"].is_number());
    assert_eq!(json(&d.join("a.manifest.json"))["backend"]["mock_presence"], "perceived");
}
