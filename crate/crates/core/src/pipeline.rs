//! Per-query orchestration: transcribe, gate, then plan and segment.
//!
//! A query whose gate verdict is "no target" never reaches the segmenter; it
//! is answered with all-background masks and marked abstained. Query failures
//! are recorded and never abort the run.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    AudioPayload, BackendError, EndpointKind, HttpTransport, MockTransport, SegmentationRequest,
    StageClient, Transport,
};
use crate::config::{ConfigError, RunConfig};
use crate::evaluate::{self, EvalError};
use crate::frames;
use crate::manifest::{ExpressionQuery, Manifest, ManifestError};
use crate::mask::{FrameDims, MaskSequence};
use crate::metrics::EvaluationReport;
use crate::sampler::{FramePlan, SamplingPolicy};
use crate::types::{GateDecision, Transcript};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("scoring failed: {0}")]
    Evaluation(#[from] EvalError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Transport,
    Backend,
    Contract,
    Io,
    Invalid,
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FailureKind::Transport => "transport",
            FailureKind::Backend => "backend",
            FailureKind::Contract => "contract",
            FailureKind::Io => "io",
            FailureKind::Invalid => "invalid",
        })
    }
}

impl From<&BackendError> for FailureKind {
    fn from(e: &BackendError) -> Self {
        match e {
            BackendError::Transport { .. } => FailureKind::Transport,
            BackendError::Backend { .. } => FailureKind::Backend,
            BackendError::ContractViolation(_) => FailureKind::Contract,
            BackendError::InvalidRequest(_) => FailureKind::Invalid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum QueryStatus {
    Ok,
    Abstained,
    Failed { kind: FailureKind, message: String },
}

impl QueryStatus {
    fn failed(kind: FailureKind, message: impl std::fmt::Display) -> Self {
        QueryStatus::Failed {
            kind,
            message: message.to_string(),
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, QueryStatus::Failed { .. })
    }

    fn label(&self) -> &'static str {
        match self {
            QueryStatus::Ok => "ok",
            QueryStatus::Abstained => "abstained",
            QueryStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub transcribe: Option<Duration>,
    pub gate: Option<Duration>,
    pub segment: Option<Duration>,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query_id: String,
    pub transcript: Option<Transcript>,
    /// Absent when gating is disabled or the query failed before the gate.
    pub gate: Option<GateDecision>,
    pub masks: Option<MaskSequence>,
    pub timings: StageTimings,
    pub status: QueryStatus,
    /// Loaded from a previous run's outputs.
    pub resumed: bool,
}

/// Per-query record persisted as `results/<query_id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResultRecord {
    query_id: String,
    #[serde(flatten)]
    status: QueryStatus,
    transcript: Option<Transcript>,
    gate: Option<GateDecision>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub queries: usize,
    pub ok: usize,
    pub abstained: usize,
    /// Failed query ids with their reasons; excluded from the evaluation.
    pub failed: BTreeMap<String, String>,
    pub gate_enabled: bool,
    pub evaluation: Option<EvaluationReport>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Skip queries whose outputs already exist.
    pub resume: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub results: Vec<QueryResult>,
    pub report: RunReport,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.report.failed.len()
    }
}

/// One client per model stage.
pub struct StageBackends {
    pub transcriber: StageClient,
    pub gate: StageClient,
    pub segmenter: StageClient,
}

impl StageBackends {
    /// Builds clients from the config. Mock endpoints sharing a fixture
    /// directory share one transport.
    pub fn from_config(config: &RunConfig) -> Result<Self, PipelineError> {
        let mut mocks: HashMap<String, Arc<MockTransport>> = HashMap::new();
        let mut build = |kind: EndpointKind| -> Result<StageClient, PipelineError> {
            let ep = config.endpoint(kind).clone();
            let transport: Arc<dyn Transport> = match ep.mock_dir() {
                Some(dir) => match mocks.get(dir) {
                    Some(m) => m.clone(),
                    None => {
                        let log = config.mock.request_log.clone().unwrap_or_default();
                        let mock = Arc::new(
                            MockTransport::new(dir, config.mock.clone())
                                .map_err(io_err(&log))?,
                        );
                        mocks.insert(dir.to_string(), mock.clone());
                        mock
                    }
                },
                None => Arc::new(HttpTransport::new(&ep)),
            };
            Ok(StageClient::new(ep, transport))
        };
        Ok(Self {
            transcriber: build(EndpointKind::Transcriber)?,
            gate: build(EndpointKind::Gate)?,
            segmenter: build(EndpointKind::Segmenter)?,
        })
    }

    /// Routes all three stages through one transport.
    pub fn shared(config: &RunConfig, transport: Arc<dyn Transport>) -> Self {
        let client = |kind| StageClient::new(config.endpoint(kind).clone(), transport.clone());
        Self {
            transcriber: client(EndpointKind::Transcriber),
            gate: client(EndpointKind::Gate),
            segmenter: client(EndpointKind::Segmenter),
        }
    }
}

pub struct Pipeline {
    config: RunConfig,
    backends: StageBackends,
    policy: Box<dyn SamplingPolicy>,
}

struct Failure(FailureKind, String);

impl From<BackendError> for Failure {
    fn from(e: BackendError) -> Self {
        Failure(FailureKind::from(&e), e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure(FailureKind::Io, format!("{}: {e}", path.display()))
}

fn load_frames(query: &ExpressionQuery, indices: impl Iterator<Item = usize>) -> Result<Vec<RgbImage>, Failure> {
    indices
        .map(|i| {
            let path = &query.frame_paths[i];
            frames::load_frame(path).map_err(|e| io_failure(path, e))
        })
        .collect()
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self, PipelineError> {
        let backends = StageBackends::from_config(&config)?;
        Self::with_backends(config, backends)
    }

    pub fn with_backends(config: RunConfig, backends: StageBackends) -> Result<Self, PipelineError> {
        config.validate()?;
        let policy = config
            .sampler
            .policy()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Self {
            config,
            backends,
            policy,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    /// Runs the three stages for one query.
    pub fn run_query(&self, query: &ExpressionQuery) -> QueryResult {
        let started = Instant::now();
        let mut result = QueryResult {
            query_id: query.query_id.clone(),
            transcript: None,
            gate: None,
            masks: None,
            timings: StageTimings::default(),
            status: QueryStatus::Ok,
            resumed: false,
        };
        if let Err(Failure(kind, message)) = self.stages(query, &mut result) {
            log::warn!("query {} failed ({kind}): {message}", query.query_id);
            result.status = QueryStatus::failed(kind, message);
            result.masks = None;
        }
        result.timings.total = started.elapsed();
        result
    }

    fn plan(&self, total_frames: usize) -> Result<FramePlan, Failure> {
        let s = &self.config.sampler;
        self.policy
            .plan(total_frames, s.clip_count.min(total_frames), s.compressed_per_clip)
            .map_err(|e| Failure(FailureKind::Invalid, e.to_string()))
    }

    fn output_dims(query: &ExpressionQuery) -> Result<FrameDims, Failure> {
        match query.declared_dims() {
            Some(d) => Ok(d),
            None => {
                let first = &query.frame_paths[0];
                frames::frame_dims(first).map_err(|e| io_failure(first, e))
            }
        }
    }

    fn stages(&self, query: &ExpressionQuery, out: &mut QueryResult) -> Result<(), Failure> {
        let qid = &query.query_id;
        let audio =
            AudioPayload::load(&query.audio_path).map_err(|e| io_failure(&query.audio_path, e))?;

        let t = Instant::now();
        let transcript = self.backends.transcriber.transcribe(qid, &audio)?;
        out.timings.transcribe = Some(t.elapsed());
        if transcript.is_blank() {
            log::warn!("query {qid}: empty transcript");
        }
        out.transcript = Some(transcript.clone());

        let dims = Self::output_dims(query)?;
        let plan = self.plan(query.frame_count())?;
        let key_frames = load_frames(query, plan.key_frames())?;

        let has_target = if self.config.gate_enabled {
            let thumbs: Vec<RgbImage> = key_frames
                .iter()
                .map(|f| frames::downscale(f, plan.compressed_scale))
                .collect();
            let t = Instant::now();
            let decision =
                self.backends
                    .gate
                    .gate(qid, &audio, &thumbs, self.config.gate_threshold)?;
            out.timings.gate = Some(t.elapsed());
            out.gate = Some(decision);
            decision.has_target
        } else {
            // nothing to refer to without either a gate verdict or a transcript
            !transcript.is_blank()
        };

        let abstain = |out: &mut QueryResult| -> Result<(), Failure> {
            let masks = MaskSequence::empty(query.video_id.clone(), query.frame_count(), dims)
                .map_err(|e| Failure(FailureKind::Invalid, e.to_string()))?;
            out.masks = Some(masks);
            out.status = QueryStatus::Abstained;
            Ok(())
        };
        if !has_target {
            return abstain(out);
        }

        let compressed = load_frames(query, plan.compressed_frames())?
            .iter()
            .map(|f| frames::downscale(f, plan.compressed_scale))
            .collect();
        let request = SegmentationRequest {
            query_id: qid.clone(),
            text: transcript.text,
            plan,
            key_frames,
            compressed_frames: compressed,
            target_dims: dims,
            audio_digest: Some(audio.digest),
        };
        let t = Instant::now();
        let response = self.backends.segmenter.segment(&request)?;
        out.timings.segment = Some(t.elapsed());
        let masks = MaskSequence::new(query.video_id.clone(), response.masks)
            .map_err(|e| Failure(FailureKind::Contract, e.to_string()))?;
        out.masks = Some(masks);
        out.status = QueryStatus::Ok;
        Ok(())
    }

    fn predictions_dir(&self) -> PathBuf {
        self.config.output_dir.join("predictions")
    }

    fn results_dir(&self) -> PathBuf {
        self.config.output_dir.join("results")
    }

    fn try_resume(&self, query: &ExpressionQuery) -> Option<QueryResult> {
        let record_path = self.results_dir().join(format!("{}.json", query.query_id));
        let record: ResultRecord = serde_json::from_slice(&fs::read(&record_path).ok()?).ok()?;
        let masks = evaluate::read_query_masks(&self.predictions_dir(), query).ok()??;
        Some(QueryResult {
            query_id: record.query_id,
            transcript: record.transcript,
            gate: record.gate,
            masks: Some(masks),
            timings: StageTimings::default(),
            status: record.status,
            resumed: true,
        })
    }

    fn persist(&self, result: &QueryResult) -> io::Result<()> {
        let record_path = self.results_dir().join(format!("{}.json", result.query_id));
        match &result.masks {
            Some(masks) => {
                evaluate::write_query_masks(&self.predictions_dir(), &result.query_id, masks)?;
                let record = ResultRecord {
                    query_id: result.query_id.clone(),
                    status: result.status.clone(),
                    transcript: result.transcript.clone(),
                    gate: result.gate,
                };
                let mut bytes = serde_json::to_vec_pretty(&record)?;
                bytes.push(b'\n');
                write_atomic(&record_path, &bytes)
            }
            None => {
                // drop stale outputs so a failed query is never scored from an older run
                let stale = self.predictions_dir().join(&result.query_id);
                if stale.exists() {
                    fs::remove_dir_all(stale)?;
                }
                if record_path.exists() {
                    fs::remove_file(record_path)?;
                }
                Ok(())
            }
        }
    }

    /// Runs every manifest query on a pool of `workers` threads, persists
    /// predictions and writes `report.json` and `run.log`.
    pub fn run_all(&self, options: RunOptions) -> Result<RunOutcome, PipelineError> {
        let manifest = Manifest::load(&self.config.manifest_path)?;
        self.run_manifest(&manifest, options)
    }

    pub fn run_manifest(
        &self,
        manifest: &Manifest,
        options: RunOptions,
    ) -> Result<RunOutcome, PipelineError> {
        let out_dir = &self.config.output_dir;
        for dir in [out_dir.clone(), self.predictions_dir(), self.results_dir()] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let log_path = out_dir.join("run.log");
        let run_log = Mutex::new(File::create(&log_path).map_err(io_err(&log_path))?);

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .expect("thread pool");
        let results: Vec<QueryResult> = pool.install(|| {
            manifest
                .queries
                .par_iter()
                .map(|q| {
                    let resumed = if options.resume { self.try_resume(q) } else { None };
                    let mut result = resumed.unwrap_or_else(|| self.run_query(q));
                    if !result.resumed {
                        if let Err(e) = self.persist(&result) {
                            result.status = QueryStatus::failed(FailureKind::Io, e);
                            result.masks = None;
                        }
                    }
                    let line = log_line(&result);
                    if let Err(e) = run_log.lock().unwrap().write_all(line.as_bytes()) {
                        log::warn!("run.log write failed: {e}");
                    }
                    result
                })
                .collect()
        });

        let report = self.build_report(manifest, &results)?;
        let report_path = out_dir.join("report.json");
        let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
        bytes.push(b'\n');
        write_atomic(&report_path, &bytes).map_err(io_err(&report_path))?;

        let mut log = run_log.into_inner().unwrap();
        write!(log, "{}", timing_summary(&results)).map_err(io_err(&log_path))?;
        Ok(RunOutcome { results, report })
    }

    fn build_report(
        &self,
        manifest: &Manifest,
        results: &[QueryResult],
    ) -> Result<RunReport, PipelineError> {
        let count = |label: &str| results.iter().filter(|r| r.status.label() == label).count();
        let failed: BTreeMap<String, String> = results
            .iter()
            .filter_map(|r| match &r.status {
                QueryStatus::Failed { kind, message } => {
                    Some((r.query_id.clone(), format!("{kind}: {message}")))
                }
                _ => None,
            })
            .collect();
        let evaluation = if manifest.has_ground_truth() {
            let predictions: BTreeMap<String, MaskSequence> = results
                .iter()
                .filter_map(|r| r.masks.clone().map(|m| (r.query_id.clone(), m)))
                .collect();
            let scored = manifest
                .queries
                .iter()
                .filter(|q| !failed.contains_key(&q.query_id));
            Some(evaluate::evaluate(
                scored,
                &predictions,
                self.config.evaluation,
                self.config.aggregate_options(),
            )?)
        } else {
            log::info!("manifest lacks ground truth; writing predictions only");
            None
        };
        Ok(RunReport {
            queries: results.len(),
            ok: count("ok"),
            abstained: count("abstained"),
            failed,
            gate_enabled: self.config.gate_enabled,
            evaluation,
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn ms(d: Option<Duration>) -> String {
    d.map(|d| format!("{:.1}", d.as_secs_f64() * 1e3))
        .unwrap_or_else(|| "-".into())
}

fn log_line(r: &QueryResult) -> String {
    let detail = match &r.status {
        QueryStatus::Failed { message, .. } => format!(" error={message}"),
        _ => String::new(),
    };
    format!(
        "query={} status={}{} transcribe_ms={} gate_ms={} segment_ms={} total_ms={}{}\n",
        r.query_id,
        r.status.label(),
        if r.resumed { " resumed" } else { "" },
        ms(r.timings.transcribe),
        ms(r.timings.gate),
        ms(r.timings.segment),
        ms(Some(r.timings.total)),
        detail,
    )
}

fn timing_summary(results: &[QueryResult]) -> String {
    let sum = |f: fn(&StageTimings) -> Option<Duration>| -> Duration {
        results.iter().filter_map(|r| f(&r.timings)).sum()
    };
    format!(
        "summary queries={} transcribe_ms={} gate_ms={} segment_ms={} total_ms={}\n",
        results.len(),
        ms(Some(sum(|t| t.transcribe))),
        ms(Some(sum(|t| t.gate))),
        ms(Some(sum(|t| t.segment))),
        ms(Some(sum(|t| Some(t.total)))),
    )
}
