use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    AudioRef, GateRequest, GateResponse, SegmentRequest, SegmentResponse, TranscribeRequest,
    TranscribeResponse,
};
use super::{AudioMode, AudioPayload, BackendEndpoint, BackendError, EndpointKind, Transport};
use crate::frames::encode_png_b64;
use crate::mask::{BinaryMask, FrameDims};
use crate::rle;
use crate::sampler::FramePlan;
use crate::types::{GateDecision, Transcript};

/// Counting semaphore bounding concurrent requests per endpoint.
struct InFlight {
    limit: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            busy: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock().unwrap();
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap();
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Input of the segmentation stage.
#[derive(Debug, Clone)]
pub struct SegmentationRequest {
    pub query_id: String,
    pub text: String,
    pub plan: FramePlan,
    /// Full-resolution key frames, one per clip, in plan order.
    pub key_frames: Vec<RgbImage>,
    /// Downscaled neighbours in plan order.
    pub compressed_frames: Vec<RgbImage>,
    pub target_dims: FrameDims,
    pub audio_digest: Option<String>,
}

impl SegmentationRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        self.plan
            .validate()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        if self.key_frames.len() != self.plan.clips.len() {
            return Err(BackendError::InvalidRequest(format!(
                "{} key frames for {} clips",
                self.key_frames.len(),
                self.plan.clips.len()
            )));
        }
        let compressed = self.plan.compressed_frames().count();
        if self.compressed_frames.len() != compressed {
            return Err(BackendError::InvalidRequest(format!(
                "{} compressed frames, plan names {compressed}",
                self.compressed_frames.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResponse {
    /// One mask per video frame at the requested dimensions.
    pub masks: Vec<BinaryMask>,
    pub per_clip_confidence: Option<Vec<f64>>,
}

/// Client for one stage endpoint.
///
/// Only transport failures are retried, with exponential backoff; the encoded
/// body is built once and resent unchanged.
pub struct StageClient {
    endpoint: BackendEndpoint,
    transport: Arc<dyn Transport>,
    in_flight: InFlight,
}

impl StageClient {
    pub fn new(endpoint: BackendEndpoint, transport: Arc<dyn Transport>) -> Self {
        let in_flight = InFlight::new(endpoint.max_in_flight);
        Self {
            endpoint,
            transport,
            in_flight,
        }
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    fn expect_kind(&self, kind: EndpointKind) -> Result<(), BackendError> {
        if self.endpoint.kind != kind {
            return Err(BackendError::InvalidRequest(format!(
                "{} endpoint cannot serve {kind} requests",
                self.endpoint.kind
            )));
        }
        Ok(())
    }

    fn audio_ref(&self, audio: &AudioPayload) -> AudioRef {
        match self.transport.audio_mode() {
            AudioMode::Inline => AudioRef {
                audio_b64: Some(BASE64.encode(&audio.bytes)),
                audio_digest: None,
            },
            AudioMode::Digest => AudioRef {
                audio_b64: None,
                audio_digest: Some(audio.digest.clone()),
            },
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        kind: EndpointKind,
        request: &Req,
    ) -> Result<Resp, BackendError> {
        self.expect_kind(kind)?;
        let body = serde_json::to_vec(request)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let _permit = self.in_flight.acquire();
        let mut attempt = 0u32;
        loop {
            match self.transport.post(kind, &body) {
                Ok(bytes) => {
                    return serde_json::from_slice(&bytes).map_err(|e| {
                        BackendError::ContractViolation(format!("undecodable {kind} response: {e}"))
                    })
                }
                Err(BackendError::Transport { message, .. }) => {
                    if attempt >= self.endpoint.max_retries {
                        return Err(BackendError::Transport {
                            message,
                            attempts: attempt + 1,
                        });
                    }
                    let delay = self
                        .endpoint
                        .initial_backoff_ms
                        .saturating_mul(1u64 << attempt.min(16));
                    log::debug!("{kind} transport failure ({message}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(other) => return Err(other),
            }
        }
    }

    pub fn transcribe(
        &self,
        query_id: &str,
        audio: &AudioPayload,
    ) -> Result<Transcript, BackendError> {
        if audio.bytes.is_empty() {
            return Err(BackendError::InvalidRequest("audio payload is empty".into()));
        }
        let req = TranscribeRequest {
            query_id: query_id.to_string(),
            audio: self.audio_ref(audio),
            sample_rate: audio.sample_rate,
        };
        let resp: TranscribeResponse = self.call(EndpointKind::Transcriber, &req)?;
        if !(0.0..=1.0).contains(&resp.confidence) {
            return Err(BackendError::ContractViolation(format!(
                "transcript confidence {} outside [0, 1]",
                resp.confidence
            )));
        }
        Ok(Transcript {
            text: resp.text,
            language: resp.language,
            confidence: resp.confidence,
        })
    }

    pub fn gate(
        &self,
        query_id: &str,
        audio: &AudioPayload,
        thumbnails: &[RgbImage],
        threshold: f64,
    ) -> Result<GateDecision, BackendError> {
        let thumbnails_b64 = thumbnails
            .iter()
            .map(encode_png_b64)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let req = GateRequest {
            query_id: query_id.to_string(),
            audio: self.audio_ref(audio),
            thumbnails_b64,
            threshold,
        };
        let resp: GateResponse = self.call(EndpointKind::Gate, &req)?;
        let decision = GateDecision {
            has_target: resp.has_target,
            score: resp.score,
        };
        if !decision.is_consistent(threshold) {
            return Err(BackendError::ContractViolation(format!(
                "gate returned has_target={} with score {} at threshold {threshold}",
                resp.has_target, resp.score
            )));
        }
        Ok(decision)
    }

    pub fn segment(
        &self,
        request: &SegmentationRequest,
    ) -> Result<SegmentationResponse, BackendError> {
        request.validate()?;
        let encode_all = |images: &[RgbImage]| {
            images
                .iter()
                .map(encode_png_b64)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| BackendError::InvalidRequest(e.to_string()))
        };
        let wire = SegmentRequest {
            query_id: request.query_id.clone(),
            text: request.text.clone(),
            plan: request.plan.clone(),
            key_frames_b64: encode_all(&request.key_frames)?,
            compressed_frames_b64: encode_all(&request.compressed_frames)?,
            target_dims: request.target_dims,
            audio_digest: match self.transport.audio_mode() {
                AudioMode::Digest => request.audio_digest.clone(),
                AudioMode::Inline => None,
            },
        };
        let resp: SegmentResponse = self.call(EndpointKind::Segmenter, &wire)?;
        check_segment_response(resp, &request.plan, request.target_dims)
    }
}

fn check_segment_response(
    resp: SegmentResponse,
    plan: &FramePlan,
    dims: FrameDims,
) -> Result<SegmentationResponse, BackendError> {
    let violation = |msg: String| Err(BackendError::ContractViolation(msg));
    if resp.masks.len() != plan.total_frames {
        return violation(format!(
            "expected {} masks, got {}",
            plan.total_frames,
            resp.masks.len()
        ));
    }
    let mut masks = Vec::with_capacity(resp.masks.len());
    for (i, r) in resp.masks.iter().enumerate() {
        if r.height != dims.height || r.width != dims.width {
            return violation(format!(
                "mask {i} is {}x{}, expected {}x{}",
                r.height, r.width, dims.height, dims.width
            ));
        }
        masks.push(rle::decode(r).map_err(|e| {
            BackendError::ContractViolation(format!("mask {i}: {e}"))
        })?);
    }
    if let Some(conf) = &resp.per_clip_confidence {
        if conf.len() != plan.clips.len() || conf.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return violation("per_clip_confidence must hold one value in [0, 1] per clip".into());
        }
    }
    Ok(SegmentationResponse {
        masks,
        per_clip_confidence: resp.per_clip_confidence,
    })
}
