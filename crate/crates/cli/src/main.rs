mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use vidrel_core::backend::MissingKeyPolicy;
use vidrel_core::eval::Task;
use vidrel_core::query::BackendKind;

use crate::manifest::MockPresence;

/// Relation queries over sampled movie frames.
#[derive(Debug, Parser)]
#[command(name = "vidrel", version)]
struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic movie with planted relations, queries and gold.
    Gen(GenArgs),
    /// Answer fill-in-the-blank graph queries.
    Run(RunArgs),
    /// Answer multiple-choice questions.
    RunQa(RunArgs),
    /// Score answer files against gold answers.
    Eval(EvalArgs),
    /// Compare a clean and a noisy evaluation report.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Directory to write the movie files into.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// TOML file with a [synth] table.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub entities: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Standard deviation of detection feature noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub relations: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum pairwise cosine similarity between anchors.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Seconds between frames.
    #[arg(long)]
    pub period: Option<f64>,
    #[arg(long)]
    pub movie_id: Option<String>,
}

const MANIFEST_CONFLICTS: &[&str] = &[
    "features", "subs", "anchors", "ontology", "queries", "weights", "config", "backend", "truth",
    "mock_presence", "scores", "missing", "endpoint", "timeout_s", "max_attempts", "period", "top_k",
    "threshold", "vicinity",
];

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Re-run exactly what a previous run's manifest describes.
    #[arg(long, conflicts_with_all = MANIFEST_CONFLICTS)]
    pub manifest: Option<PathBuf>,
    /// Frame feature records (JSON lines).
    #[arg(long, required_unless_present = "manifest")]
    pub features: Option<PathBuf>,
    /// Subtitles (.srt).
    #[arg(long, required_unless_present = "manifest")]
    pub subs: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub anchors: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub ontology: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub queries: Option<PathBuf>,
    /// Answer file to write. Defaults to the manifest's output.
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// Pooling weights (JSON). Defaults to uniform attention.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// TOML config with [pipeline] and [backend] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub backend: Option<BackendKind>,
    /// Truth file for the mock backend.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Presence source for the mock backend.
    #[arg(long, value_enum)]
    pub mock_presence: Option<MockPresence>,
    /// Recorded score file for the file backend.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// File backend policy for unrecorded requests: strict or zero.
    #[arg(long)]
    pub missing: Option<MissingKeyPolicy>,
    /// Scoring service URL for the remote backend.
    #[arg(long, env = "VIDREL_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    #[arg(long)]
    pub max_attempts: Option<u32>,
    /// Also write every score the backend produced (JSON lines).
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Seconds between sampled frames.
    #[arg(long)]
    pub period: Option<f64>,
    /// Frames kept per subquery.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Naming threshold on cosine similarity.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Subtitle window half-width in seconds.
    #[arg(long)]
    pub vicinity: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Answer files; pair each with a --gold file in the same order.
    #[arg(long, required = true, num_args = 1..)]
    pub results: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub gold: Vec<PathBuf>,
    #[arg(long, default_value = "graph")]
    pub task: Task,
    /// Report file (JSON).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub noisy: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_env("VIDREL_LOG").unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(false)
        .with_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let outcome = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Run(a) => commands::run(a, manifest::RunMode::Graph),
        Command::RunQa(a) => commands::run(a, manifest::RunMode::Qa),
        Command::Eval(a) => commands::eval(a),
        Command::Compare(a) => commands::compare(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = commands::exit_code(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
