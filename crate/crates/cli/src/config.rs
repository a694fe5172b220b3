//! Layered settings: command-line flags win over the TOML config file, which
//! wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use vidrel_core::backend::MissingKeyPolicy;
use vidrel_core::query::{BackendKind, PipelineConfig};
use vidrel_core::synth::SynthSpec;

use crate::manifest::MockPresence;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub backend: BackendSection,
    pub synth: Option<SynthSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub sampling_period_s: Option<f64>,
    pub top_k: Option<usize>,
    pub naming_threshold: Option<f64>,
    pub vicinity_s: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<BackendKind>,
    pub truth: Option<PathBuf>,
    pub mock_presence: Option<MockPresence>,
    pub scores: Option<PathBuf>,
    pub missing: Option<MissingKeyPolicy>,
    pub endpoint: Option<String>,
    pub timeout_s: Option<f64>,
    pub max_attempts: Option<u32>,
    pub max_in_flight: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Pipeline values given on the command line.
#[derive(Debug, Default, Clone)]
pub struct PipelineFlags {
    pub sampling_period_s: Option<f64>,
    pub top_k: Option<usize>,
    pub naming_threshold: Option<f64>,
    pub vicinity_s: Option<f64>,
    pub backend: Option<BackendKind>,
}

pub fn resolve_pipeline(flags: &PipelineFlags, file: &ConfigFile) -> PipelineConfig {
    let d = PipelineConfig::default();
    let f = &file.pipeline;
    PipelineConfig {
        sampling_period_s: flags
            .sampling_period_s
            .or(f.sampling_period_s)
            .unwrap_or(d.sampling_period_s),
        top_k: flags.top_k.or(f.top_k).unwrap_or(d.top_k),
        naming_threshold: flags
            .naming_threshold
            .or(f.naming_threshold)
            .unwrap_or(d.naming_threshold),
        vicinity_s: flags.vicinity_s.or(f.vicinity_s).unwrap_or(d.vicinity_s),
        backend: flags.backend.or(file.backend.kind).unwrap_or(d.backend),
    }
}
