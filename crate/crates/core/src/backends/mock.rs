//! Deterministic fixture-backed backend.
//!
//! Fixtures are addressed by the SHA-256 digest of the query's audio file:
//!
//! ```text
//! <root>/<digest>/transcript.txt   transcript text
//! <root>/<digest>/gate.txt         `target`, `no-target`, or a score in [0, 1]
//! <root>/<digest>/masks/<i>.rle    segmenter output for frame i
//! ```

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::wire::{
    GateRequest, GateResponse, SegmentRequest, SegmentResponse, TranscribeRequest,
    TranscribeResponse,
};
use super::{AudioMode, BackendError, EndpointKind, Transport};
use crate::rle::{self, RleMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockSegmenter {
    /// Returns the fixture masks unchanged.
    #[default]
    Oracle,
    /// Erodes every fixture mask by one pixel.
    Degraded,
}

/// Behaviour knobs for mock backends.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockOptions {
    #[serde(default)]
    pub segmenter: MockSegmenter,
    /// Queries whose gate score is flipped to `1 - score`.
    #[serde(default)]
    pub invert_gate: BTreeSet<String>,
    /// Queries for which every call fails at the transport level.
    #[serde(default)]
    pub transport_failures: BTreeSet<String>,
    /// Append one line per call to this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MockCall {
    pub kind: EndpointKind,
    pub query_id: String,
    pub outcome: &'static str,
}

pub struct MockTransport {
    root: PathBuf,
    options: MockOptions,
    calls: Mutex<Vec<MockCall>>,
    log_file: Option<Mutex<File>>,
}

fn error(status: u16, code: &str, message: impl Into<String>) -> BackendError {
    BackendError::Backend {
        status,
        error_code: code.to_string(),
        message: message.into(),
    }
}

fn bad_request(e: impl std::fmt::Display) -> BackendError {
    error(400, "bad-request", e.to_string())
}

fn digest_dir(root: &Path, digest: Option<&str>) -> Result<PathBuf, BackendError> {
    let digest = digest.ok_or_else(|| bad_request("missing audio_digest"))?;
    if digest.is_empty() || !digest.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(bad_request("audio_digest must be hex"));
    }
    let dir = root.join(digest);
    if !dir.is_dir() {
        return Err(error(404, "unknown-audio", format!("no fixture for {digest}")));
    }
    Ok(dir)
}

fn read_fixture(path: &Path) -> Result<String, BackendError> {
    std::fs::read_to_string(path)
        .map_err(|e| error(500, "fixture-io", format!("{}: {e}", path.display())))
}

fn parse_gate_score(text: &str) -> Result<f64, BackendError> {
    match text.trim() {
        "target" => Ok(1.0),
        "no-target" => Ok(0.0),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|s| (0.0..=1.0).contains(s))
            .ok_or_else(|| error(500, "fixture-invalid", format!("bad gate fixture `{other}`"))),
    }
}

fn peek_query_id(body: &[u8]) -> String {
    #[derive(Deserialize)]
    struct Peek {
        query_id: String,
    }
    serde_json::from_slice::<Peek>(body)
        .map(|p| p.query_id)
        .unwrap_or_default()
}

impl MockTransport {
    pub fn new(root: impl Into<PathBuf>, options: MockOptions) -> std::io::Result<Self> {
        let log_file = match &options.request_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new().create(true).append(true).open(path)?,
            )),
            None => None,
        };
        Ok(Self {
            root: root.into(),
            options,
            calls: Mutex::new(Vec::new()),
            log_file,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Every call received so far, in arrival order.
    pub fn calls(&self) -> Vec<MockCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn calls_for(&self, kind: EndpointKind) -> Vec<MockCall> {
        self.calls()
            .into_iter()
            .filter(|c| c.kind == kind)
            .collect()
    }

    fn record(&self, kind: EndpointKind, query_id: String, outcome: &'static str) {
        if let Some(file) = &self.log_file {
            let line = format!("{kind} {query_id} {outcome}\n");
            if let Err(e) = file.lock().unwrap().write_all(line.as_bytes()) {
                log::warn!("mock request log write failed: {e}");
            }
        }
        self.calls.lock().unwrap().push(MockCall {
            kind,
            query_id,
            outcome,
        });
    }

    /// Serves one request body; the same handler backs in-process calls and
    /// test HTTP servers.
    pub fn handle(&self, kind: EndpointKind, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let query_id = peek_query_id(body);
        if self.options.transport_failures.contains(&query_id) {
            self.record(kind, query_id, "transport-failure");
            return Err(BackendError::transport("injected transport failure"));
        }
        let result = match kind {
            EndpointKind::Transcriber => self.transcribe(body),
            EndpointKind::Gate => self.gate(body),
            EndpointKind::Segmenter => self.segment(body),
        };
        self.record(kind, query_id, if result.is_ok() { "ok" } else { "error" });
        result
    }

    fn transcribe(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: TranscribeRequest = serde_json::from_slice(body).map_err(bad_request)?;
        let dir = digest_dir(&self.root, req.audio.audio_digest.as_deref())?;
        let text = read_fixture(&dir.join("transcript.txt"))?;
        to_json(&TranscribeResponse {
            text: text.trim_end_matches(['\n', '\r']).to_string(),
            language: None,
            confidence: 1.0,
        })
    }

    fn gate(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: GateRequest = serde_json::from_slice(body).map_err(bad_request)?;
        let dir = digest_dir(&self.root, req.audio.audio_digest.as_deref())?;
        let mut score = parse_gate_score(&read_fixture(&dir.join("gate.txt"))?)?;
        if self.options.invert_gate.contains(&req.query_id) {
            score = 1.0 - score;
        }
        to_json(&GateResponse {
            has_target: score >= req.threshold,
            score,
        })
    }

    fn segment(&self, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let req: SegmentRequest = serde_json::from_slice(body).map_err(bad_request)?;
        if req.key_frames_b64.len() != req.plan.clips.len()
            || req.compressed_frames_b64.len() != req.plan.compressed_frames().count()
        {
            return Err(bad_request("frame payload does not match the plan"));
        }
        let dir = digest_dir(&self.root, req.audio_digest.as_deref())?.join("masks");
        let mut masks = Vec::new();
        for i in 0.. {
            let path = dir.join(format!("{i}.rle"));
            if !path.exists() {
                break;
            }
            let rle = RleMask::parse_text(&read_fixture(&path)?)
                .map_err(|e| error(500, "fixture-invalid", e.to_string()))?;
            masks.push(match self.options.segmenter {
                MockSegmenter::Oracle => rle,
                MockSegmenter::Degraded => {
                    let mask = rle::decode(&rle)
                        .map_err(|e| error(500, "fixture-invalid", e.to_string()))?;
                    rle::encode(&mask.eroded())
                }
            });
        }
        let confidence = match self.options.segmenter {
            MockSegmenter::Oracle => 1.0,
            MockSegmenter::Degraded => 0.5,
        };
        to_json(&SegmentResponse {
            masks,
            per_clip_confidence: Some(vec![confidence; req.plan.clips.len()]),
        })
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, BackendError> {
    serde_json::to_vec(value).map_err(|e| error(500, "encode", e.to_string()))
}

impl Transport for MockTransport {
    fn post(&self, kind: EndpointKind, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        self.handle(kind, body)
    }

    fn audio_mode(&self) -> AudioMode {
        AudioMode::Digest
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::wire::AudioRef;
    use crate::mask::{BinaryMask, FrameDims};
    use crate::sampler::plan_uniform_plus;

    fn fixture(root: &Path, digest: &str, gate: &str, masks: &[BinaryMask]) {
        let dir = root.join(digest);
        std::fs::create_dir_all(dir.join("masks")).unwrap();
        std::fs::write(dir.join("transcript.txt"), "the panda rolling on the ground\n").unwrap();
        std::fs::write(dir.join("gate.txt"), gate).unwrap();
        for (i, m) in masks.iter().enumerate() {
            std::fs::write(dir.join(format!("masks/{i}.rle")), rle::encode(m).to_text()).unwrap();
        }
    }

    fn digest_ref(d: &str) -> AudioRef {
        AudioRef {
            audio_b64: None,
            audio_digest: Some(d.into()),
        }
    }

    #[test]
    fn transcribe_and_gate_lookups() {
        let tmp = tempfile::tempdir().unwrap();
        fixture(tmp.path(), "aa", "target\n", &[]);
        fixture(tmp.path(), "bb", "no-target\n", &[]);
        let opts = MockOptions {
            invert_gate: ["q-inv".to_string()].into(),
            ..Default::default()
        };
        let mock = MockTransport::new(tmp.path(), opts).unwrap();

        let body = serde_json::to_vec(&TranscribeRequest {
            query_id: "q".into(),
            audio: digest_ref("aa"),
            sample_rate: None,
        })
        .unwrap();
        let resp: TranscribeResponse =
            serde_json::from_slice(&mock.handle(EndpointKind::Transcriber, &body).unwrap()).unwrap();
        assert_eq!(resp.text, "the panda rolling on the ground");
        assert_eq!(resp.confidence, 1.0);

        let gate = |qid: &str, d: &str| -> GateResponse {
            let body = serde_json::to_vec(&GateRequest {
                query_id: qid.into(),
                audio: digest_ref(d),
                thumbnails_b64: vec![],
                threshold: 0.5,
            })
            .unwrap();
            serde_json::from_slice(&mock.handle(EndpointKind::Gate, &body).unwrap()).unwrap()
        };
        assert_eq!(gate("q", "aa"), GateResponse { has_target: true, score: 1.0 });
        assert_eq!(gate("q", "bb"), GateResponse { has_target: false, score: 0.0 });
        assert_eq!(gate("q-inv", "bb"), GateResponse { has_target: true, score: 1.0 });

        let missing = serde_json::to_vec(&TranscribeRequest {
            query_id: "q".into(),
            audio: digest_ref("cc"),
            sample_rate: None,
        })
        .unwrap();
        assert!(matches!(
            mock.handle(EndpointKind::Transcriber, &missing),
            Err(BackendError::Backend { status: 404, .. })
        ));
        assert_eq!(mock.calls().len(), 5);
    }

    #[test]
    fn degraded_segmenter_erodes_and_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let blob = BinaryMask::from_fn(6, 6, |r, c| (1..5).contains(&r) && (1..5).contains(&c))
            .unwrap();
        fixture(tmp.path(), "aa", "target", &[blob.clone(), blob.clone()]);
        let plan = plan_uniform_plus(2, 1, 1).unwrap();
        let body = serde_json::to_vec(&SegmentRequest {
            query_id: "q".into(),
            text: "x".into(),
            plan,
            key_frames_b64: vec!["k".into()],
            compressed_frames_b64: vec!["c".into()],
            target_dims: FrameDims::new(6, 6),
            audio_digest: Some("aa".into()),
        })
        .unwrap();

        let oracle = MockTransport::new(tmp.path(), MockOptions::default()).unwrap();
        let first = oracle.handle(EndpointKind::Segmenter, &body).unwrap();
        assert_eq!(first, oracle.handle(EndpointKind::Segmenter, &body).unwrap());
        let resp: SegmentResponse = serde_json::from_slice(&first).unwrap();
        assert_eq!(rle::decode(&resp.masks[0]).unwrap(), blob);

        let degraded = MockTransport::new(
            tmp.path(),
            MockOptions {
                segmenter: MockSegmenter::Degraded,
                ..Default::default()
            },
        )
        .unwrap();
        let resp: SegmentResponse =
            serde_json::from_slice(&degraded.handle(EndpointKind::Segmenter, &body).unwrap())
                .unwrap();
        assert_eq!(rle::decode(&resp.masks[1]).unwrap().area(), 4);
    }

    #[test]
    fn injected_failures_are_transport_errors_and_logged() {
        let tmp = tempfile::tempdir().unwrap();
        let log = tmp.path().join("calls.log");
        let mock = MockTransport::new(
            tmp.path(),
            MockOptions {
                transport_failures: ["q".to_string()].into(),
                request_log: Some(log.clone()),
                ..Default::default()
            },
        )
        .unwrap();
        let err = mock
            .handle(EndpointKind::Transcriber, br#"{"query_id":"q"}"#)
            .unwrap_err();
        assert!(err.is_transport());
        assert_eq!(
            std::fs::read_to_string(log).unwrap(),
            "transcriber q transport-failure\n"
        );
    }
}
