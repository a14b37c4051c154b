//! JSON bodies of the backend protocol.
//!
//! | route            | request                                  | response                     |
//! |------------------|------------------------------------------|------------------------------|
//! | `/v1/transcribe` | [`TranscribeRequest`]                    | [`TranscribeResponse`]       |
//! | `/v1/gate`       | [`GateRequest`]                          | [`GateResponse`]             |
//! | `/v1/segment`    | [`SegmentRequest`]                       | [`SegmentResponse`]          |
//!
//! Non-2xx responses carry an [`ErrorBody`].

use serde::{Deserialize, Serialize};

use crate::mask::FrameDims;
use crate::rle::RleMask;
use crate::sampler::FramePlan;

/// Audio as inline base64 or as a content digest. Exactly one is set.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AudioRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_digest: Option<String>,
}

impl AudioRef {
    pub fn is_well_formed(&self) -> bool {
        self.audio_b64.is_some() != self.audio_digest.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribeRequest {
    pub query_id: String,
    #[serde(flatten)]
    pub audio: AudioRef,
    pub sample_rate: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscribeResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRequest {
    pub query_id: String,
    #[serde(flatten)]
    pub audio: AudioRef,
    pub thumbnails_b64: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResponse {
    pub has_target: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub query_id: String,
    pub text: String,
    pub plan: FramePlan,
    pub key_frames_b64: Vec<String>,
    pub compressed_frames_b64: Vec<String>,
    pub target_dims: FrameDims,
    /// Lets digest-addressed backends find the query's fixtures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<RleMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_clip_confidence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
}
