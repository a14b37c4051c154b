//! TOML run configuration.
//!
//! ```toml
//! manifest_path = "manifest.jsonl"
//! output_dir = "out"
//! gate_enabled = true
//! gate_threshold = 0.5
//! workers = 4
//!
//! [sampler]
//! policy = "uniform-plus"
//! clip_count = 4
//! compressed_per_clip = 3
//!
//! [[endpoints]]
//! kind = "transcriber"
//! base_url = "http://localhost:8000"
//! ```
//!
//! Relative paths, including `mock:<dir>` endpoint URLs, resolve against the
//! directory holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendEndpoint, EndpointKind, MockOptions};
use crate::metrics::{AggregateOptions, BoundaryTolerance, JfAveraging};
use crate::sampler::{self, SamplingPolicy, DEFAULT_COMPRESSED_SCALE};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_threshold() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "SamplerConfig::default_policy")]
    pub policy: String,
    #[serde(default = "SamplerConfig::default_clips")]
    pub clip_count: usize,
    #[serde(default = "SamplerConfig::default_compressed")]
    pub compressed_per_clip: usize,
    #[serde(default = "SamplerConfig::default_scale")]
    pub compressed_scale: f64,
}

impl SamplerConfig {
    fn default_policy() -> String {
        "uniform-plus".into()
    }
    fn default_clips() -> usize {
        4
    }
    fn default_compressed() -> usize {
        3
    }
    fn default_scale() -> f64 {
        DEFAULT_COMPRESSED_SCALE
    }

    pub fn policy(&self) -> Result<Box<dyn SamplingPolicy>, sampler::SamplerError> {
        sampler::policy_by_name(&self.policy, self.compressed_scale)
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            policy: Self::default_policy(),
            clip_count: Self::default_clips(),
            compressed_per_clip: Self::default_compressed(),
            compressed_scale: Self::default_scale(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub boundary_tolerance: BoundaryTolerance,
    #[serde(default)]
    pub averaging: JfAveraging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Row label in ablation tables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub manifest_path: PathBuf,
    pub output_dir: PathBuf,
    pub endpoints: Vec<BackendEndpoint>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_threshold")]
    pub gate_threshold: f64,
    #[serde(default = "yes")]
    pub gate_enabled: bool,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub partial_report_allowed: bool,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub mock: MockOptions,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.resolve_paths(path.parent().unwrap_or(Path::new("")));
        config.validate()?;
        Ok(config)
    }

    /// Makes relative paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        self.manifest_path = base.join(&self.manifest_path);
        self.output_dir = base.join(&self.output_dir);
        for ep in &mut self.endpoints {
            if let Some(dir) = ep.mock_dir() {
                ep.base_url = format!("mock:{}", base.join(dir).display());
            }
        }
        if let Some(log) = &mut self.mock.request_log {
            *log = base.join(&*log);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.workers == 0 {
            return invalid("workers must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.gate_threshold) {
            return invalid(format!(
                "gate_threshold {} outside [0, 1]",
                self.gate_threshold
            ));
        }
        let mut kinds = BTreeSet::new();
        for ep in &self.endpoints {
            ep.validate().map_err(ConfigError::Invalid)?;
            if !kinds.insert(ep.kind) {
                return invalid(format!("duplicate {} endpoint", ep.kind));
            }
        }
        for kind in [
            EndpointKind::Transcriber,
            EndpointKind::Gate,
            EndpointKind::Segmenter,
        ] {
            if !kinds.contains(&kind) {
                return invalid(format!("missing {kind} endpoint"));
            }
        }
        if self.sampler.clip_count == 0 {
            return invalid("sampler.clip_count must be ≥ 1".into());
        }
        if !(self.sampler.compressed_scale > 0.0 && self.sampler.compressed_scale <= 1.0) {
            return invalid("sampler.compressed_scale must be in (0, 1]".into());
        }
        self.sampler
            .policy()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn endpoint(&self, kind: EndpointKind) -> &BackendEndpoint {
        self.endpoints
            .iter()
            .find(|e| e.kind == kind)
            .expect("validated config has every endpoint kind")
    }

    pub fn aggregate_options(&self) -> AggregateOptions {
        AggregateOptions {
            averaging: self.evaluation.averaging,
            allow_partial: self.partial_report_allowed,
        }
    }

    /// Label for ablation rows: the explicit label, else the file stem.
    pub fn display_label(&self, fallback: &str) -> String {
        self.label.clone().unwrap_or_else(|| fallback.to_string())
    }
}
