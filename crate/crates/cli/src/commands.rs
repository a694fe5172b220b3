use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use tracing::{debug, info};
use vidrel_core::backend::{
    FileBackend, MockBackend, MockTruth, RecordingBackend, RemoteBackend, RemoteConfig, ScorerBackend,
};
use vidrel_core::entity::PoolingWeights;
use vidrel_core::eval::{build_report, join_results, read_gold, robustness_compare, Report};
use vidrel_core::ingest::load_movie_bundle;
use vidrel_core::query::{read_graph_queries, read_qa_queries, write_answers, BackendKind, Pipeline};
use vidrel_core::synth::generate;
use vidrel_core::{BackendError, Error};

use crate::config::{resolve_pipeline, ConfigFile, PipelineFlags};
use crate::manifest::{manifest_path, BackendSpec, Inputs, RunManifest, RunMode};
use crate::{CompareArgs, EvalArgs, GenArgs, RunArgs};

/// 2 when the failure came from a scorer backend, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let backend = err.chain().any(|c| {
        c.downcast_ref::<BackendError>().is_some()
            || c.downcast_ref::<Error>().is_some_and(|e| e.backend_cause().is_some())
    });
    if backend {
        2
    } else {
        1
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn required(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    match p {
        Some(p) => absolute(p),
        None => bail!("--{flag} is required"),
    }
}

pub fn gen(a: &GenArgs) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let mut spec = file.synth.unwrap_or_default();
    macro_rules! apply {
        ($flag:ident => $field:ident) => {
            if let Some(v) = a.$flag.clone() {
                spec.$field = v;
            }
        };
    }
    apply!(entities => n_entities);
    apply!(frames => n_frames);
    apply!(dim => dim);
    apply!(noise => noise_sigma);
    apply!(relations => n_relations);
    apply!(queries => n_queries);
    apply!(seed => seed);
    apply!(separation => separation);
    apply!(period => sampling_period_s);
    apply!(movie_id => movie_id);

    let movie = generate(&spec)?;
    let paths = movie.write_to(&a.out_dir)?;
    let spec_path = a.out_dir.join("synth.json");
    let mut text = serde_json::to_string_pretty(&spec)?;
    text.push('\n');
    std::fs::write(&spec_path, text).with_context(|| format!("writing {}", spec_path.display()))?;
    info!(
        dir = %a.out_dir.display(),
        frames = movie.bundle.frames.len(),
        cues = movie.bundle.cues.len(),
        edges = movie.truth.edges.len(),
        queries = movie.queries.len(),
        features = %paths.features.display(),
        "generated synthetic movie"
    );
    Ok(())
}

fn build_manifest(a: &RunArgs, mode: RunMode) -> Result<RunManifest> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let flags = PipelineFlags {
        sampling_period_s: a.period,
        top_k: a.top_k,
        naming_threshold: a.threshold,
        vicinity_s: a.vicinity,
        backend: a.backend,
    };
    let config = resolve_pipeline(&flags, &file);
    let b = &file.backend;
    let truth = a.truth.clone().or(b.truth.clone());
    let scores = a.scores.clone().or(b.scores.clone());
    let endpoint = a.endpoint.clone().or(b.endpoint.clone());
    match config.backend {
        BackendKind::Mock if truth.is_none() => bail!("the mock backend needs --truth"),
        BackendKind::File if scores.is_none() => bail!("the file backend needs --scores"),
        BackendKind::Remote if endpoint.is_none() => {
            bail!("the remote backend needs --endpoint or VIDREL_ENDPOINT")
        }
        _ => {}
    }
    let defaults = RemoteConfig::new("");
    Ok(RunManifest {
        tool: "vidrel".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        mode,
        config,
        inputs: Inputs {
            features: required(&a.features, "features")?,
            subtitles: required(&a.subs, "subs")?,
            anchors: required(&a.anchors, "anchors")?,
            ontology: required(&a.ontology, "ontology")?,
            queries: required(&a.queries, "queries")?,
            weights: a.weights.as_deref().map(absolute).transpose()?,
        },
        backend: BackendSpec {
            truth: truth.as_deref().map(absolute).transpose()?,
            mock_presence: a.mock_presence.or(b.mock_presence).unwrap_or_default(),
            scores: scores.as_deref().map(absolute).transpose()?,
            missing: a.missing.or(b.missing).unwrap_or_default(),
            endpoint,
            timeout_s: a.timeout_s.or(b.timeout_s).unwrap_or(defaults.timeout.as_secs_f64()),
            max_attempts: a.max_attempts.or(b.max_attempts).unwrap_or(defaults.max_attempts),
            max_in_flight: b.max_in_flight.unwrap_or(defaults.max_in_flight),
        },
        output: required(&a.out, "out")?,
        record: a.record.as_deref().map(absolute).transpose()?,
    })
}

pub fn run(a: &RunArgs, mode: RunMode) -> Result<()> {
    let mut m = match &a.manifest {
        Some(path) => {
            let mut m = RunManifest::load(path)?;
            if m.mode != mode {
                bail!("manifest {} describes a {:?} run", path.display(), m.mode);
            }
            if let Some(out) = &a.out {
                m.output = absolute(out)?;
            }
            if let Some(rec) = &a.record {
                m.record = Some(absolute(rec)?);
            }
            m
        }
        None => build_manifest(a, mode)?,
    };
    m.created_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    execute(&m)?;
    let mpath = manifest_path(&m.output);
    m.save(&mpath)?;
    info!(answers = %m.output.display(), manifest = %mpath.display(), "run complete");
    Ok(())
}

fn make_backend(m: &RunManifest, pipeline: &Pipeline<'_>) -> Result<Box<dyn ScorerBackend>> {
    let spec = &m.backend;
    Ok(match m.config.backend {
        BackendKind::Mock => {
            let path = spec.truth.as_ref().context("mock backend without a truth file")?;
            let mut truth = MockTruth::load(path)?;
            if spec.mock_presence == crate::manifest::MockPresence::Perceived {
                truth.presence = pipeline.perceived_presence();
            }
            Box::new(MockBackend::for_bundle(truth, pipeline.bundle())?)
        }
        BackendKind::File => {
            let path = spec.scores.as_ref().context("file backend without a score file")?;
            Box::new(FileBackend::load(path, spec.missing)?)
        }
        BackendKind::Remote => {
            let endpoint = spec.endpoint.clone().context("remote backend without an endpoint")?;
            if spec.timeout_s <= 0.0 || !spec.timeout_s.is_finite() {
                bail!("timeout must be positive, got {}", spec.timeout_s);
            }
            let remote = RemoteBackend::new(RemoteConfig {
                timeout: Duration::from_secs_f64(spec.timeout_s),
                max_attempts: spec.max_attempts,
                max_in_flight: spec.max_in_flight,
                ..RemoteConfig::new(endpoint)
            });
            let health = remote.health().context("scoring service health check")?;
            if health.status != "ok" {
                return Err(BackendError::Unavailable(format!(
                    "scoring service reports status {:?}",
                    health.status
                )))
                .context("scoring service health check");
            }
            info!(models = ?health.model_ids, "scoring service ready");
            Box::new(remote)
        }
    })
}

fn execute(m: &RunManifest) -> Result<()> {
    let started = Instant::now();
    let i = &m.inputs;
    let bundle = load_movie_bundle(&i.features, &i.subtitles, &i.anchors, &i.ontology)?;
    let weights = match &i.weights {
        Some(p) => PoolingWeights::load(p)?,
        None => PoolingWeights::identity(bundle.anchors.dim()),
    };
    let pipeline = Pipeline::new(&bundle, m.config.clone(), &weights)?;
    let backend = RecordingBackend::new(make_backend(m, &pipeline)?);
    info!(
        frames = bundle.frames.len(),
        cues = bundle.cues.len(),
        entities = bundle.anchors.len(),
        backend = %m.config.backend,
        "movie loaded"
    );

    let n = match m.mode {
        RunMode::Graph => {
            let queries = read_graph_queries(&i.queries)?;
            let mut answers = Vec::with_capacity(queries.len());
            for q in &queries {
                let a = pipeline.answer_graph_query(q, &backend)?;
                debug!(query = %q.query_id, predicted = %a.predicted, "answered");
                answers.push(a);
            }
            write_answers(&m.output, &answers)?;
            answers.len()
        }
        RunMode::Qa => {
            let queries = read_qa_queries(&i.queries)?;
            let mut answers = Vec::with_capacity(queries.len());
            for q in &queries {
                let a = pipeline.answer_qa_query(q, &backend)?;
                debug!(query = %q.query_id, chosen = a.chosen_option, "answered");
                answers.push(a);
            }
            write_answers(&m.output, &answers)?;
            answers.len()
        }
    };
    if let Some(rec) = &m.record {
        backend.write(rec)?;
    }
    info!(
        queries = n,
        scores = backend.records().len(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "answered all queries"
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.results.len() != a.gold.len() {
        bail!(
            "{} --results files but {} --gold files; pass them in pairs",
            a.results.len(),
            a.gold.len()
        );
    }
    let mut results = Vec::new();
    for (r, g) in a.results.iter().zip(&a.gold) {
        let gold = read_gold(g)?;
        results.extend(
            join_results(r, &gold)
                .with_context(|| format!("joining {} with {}", r.display(), g.display()))?,
        );
    }
    let report = build_report(a.task, &results)?;
    print!("{}", report.render_text());
    if let Some(out) = &a.out {
        report.save(out)?;
        info!(report = %out.display(), "report written");
    }
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let clean = Report::load(&a.clean)?;
    let noisy = Report::load(&a.noisy)?;
    let delta = robustness_compare(&clean, &noisy)?;
    print!("{}", delta.render_text());
    if let Some(out) = &a.out {
        delta.save(out)?;
        info!(report = %out.display(), "comparison written");
    }
    Ok(())
}
