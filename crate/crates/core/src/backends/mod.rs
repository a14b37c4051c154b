//! Model-stage contracts: transcription, has-target gating and segmentation.
//!
//! Every stage speaks the same JSON-over-HTTP protocol (see [`wire`]). A
//! [`StageClient`] owns retries, the in-flight cap and response contract
//! checks; a [`Transport`] only moves bytes, either over HTTP or into the
//! fixture-backed [`MockTransport`].

mod client;
mod http;
mod mock;
pub mod wire;

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use client::{SegmentationRequest, SegmentationResponse, StageClient};
pub use http::HttpTransport;
pub use mock::{MockCall, MockOptions, MockSegmenter, MockTransport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("backend error {status} ({error_code}): {message}")]
    Backend {
        status: u16,
        error_code: String,
        message: String,
    },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn transport(message: impl Into<String>) -> Self {
        BackendError::Transport {
            message: message.into(),
            attempts: 1,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Transcriber,
    Gate,
    Segmenter,
}

impl EndpointKind {
    pub fn route(self) -> &'static str {
        match self {
            EndpointKind::Transcriber => "/v1/transcribe",
            EndpointKind::Gate => "/v1/gate",
            EndpointKind::Segmenter => "/v1/segment",
        }
    }

    pub fn from_route(route: &str) -> Option<Self> {
        [Self::Transcriber, Self::Gate, Self::Segmenter]
            .into_iter()
            .find(|k| k.route() == route)
    }
}

impl std::fmt::Display for EndpointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EndpointKind::Transcriber => "transcriber",
            EndpointKind::Gate => "gate",
            EndpointKind::Segmenter => "segmenter",
        })
    }
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

fn default_in_flight() -> usize {
    4
}

fn default_backoff_ms() -> u64 {
    100
}

/// Where and how to reach one model stage.
///
/// `base_url` is either an `http(s)://` address or `mock:<fixture dir>`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEndpoint {
    pub kind: EndpointKind,
    pub base_url: String,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
}

impl std::fmt::Debug for BackendEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendEndpoint")
            .field("kind", &self.kind)
            .field("base_url", &self.base_url)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("auth_token", &self.auth_token.as_ref().map(|_| "<redacted>"))
            .field("max_in_flight", &self.max_in_flight)
            .field("initial_backoff_ms", &self.initial_backoff_ms)
            .finish()
    }
}

impl BackendEndpoint {
    pub fn new(kind: EndpointKind, base_url: impl Into<String>) -> Self {
        Self {
            kind,
            base_url: base_url.into(),
            timeout: default_timeout(),
            max_retries: default_retries(),
            auth_token: None,
            max_in_flight: default_in_flight(),
            initial_backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(format!("{} endpoint timeout must be positive", self.kind));
        }
        if self.max_in_flight == 0 {
            return Err(format!("{} endpoint max_in_flight must be ≥ 1", self.kind));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout)
    }

    /// The fixture directory of a `mock:` endpoint.
    pub fn mock_dir(&self) -> Option<&str> {
        self.base_url.strip_prefix("mock:")
    }
}

/// How audio travels in a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AudioMode {
    /// Inline base64 payload.
    Inline,
    /// Content digest only; the backend resolves it itself.
    Digest,
}

/// Moves encoded request bodies to a backend.
pub trait Transport: Send + Sync {
    fn post(&self, kind: EndpointKind, body: &[u8]) -> Result<Vec<u8>, BackendError>;

    fn audio_mode(&self) -> AudioMode;
}

/// Raw audio bytes plus their content digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioPayload {
    pub bytes: Vec<u8>,
    /// Lowercase hex SHA-256 of `bytes`.
    pub digest: String,
    pub sample_rate: Option<u32>,
}

impl AudioPayload {
    pub fn new(bytes: Vec<u8>) -> Self {
        let digest = audio_digest(&bytes);
        let sample_rate = wav_sample_rate(&bytes);
        Self {
            bytes,
            digest,
            sample_rate,
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(std::fs::read(path)?))
    }
}

pub fn audio_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Sample rate from a RIFF/WAVE header, if the payload has one.
fn wav_sample_rate(bytes: &[u8]) -> Option<u32> {
    if bytes.len() < 28 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    Some(u32::from_le_bytes(bytes[24..28].try_into().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_sha256_hex() {
        assert_eq!(
            audio_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn reads_wav_sample_rate() {
        let mut wav = Vec::new();
        wav.extend_from_slice(b"RIFF");
        wav.extend_from_slice(&36u32.to_le_bytes());
        wav.extend_from_slice(b"WAVEfmt ");
        wav.extend_from_slice(&16u32.to_le_bytes());
        wav.extend_from_slice(&1u16.to_le_bytes());
        wav.extend_from_slice(&1u16.to_le_bytes());
        wav.extend_from_slice(&16_000u32.to_le_bytes());
        assert_eq!(AudioPayload::new(wav).sample_rate, Some(16_000));
        assert_eq!(AudioPayload::new(b"not audio".to_vec()).sample_rate, None);
    }

    #[test]
    fn endpoint_debug_redacts_token() {
        let mut ep = BackendEndpoint::new(EndpointKind::Gate, "http://x");
        ep.auth_token = Some("hunter2".into());
        assert!(!format!("{ep:?}").contains("hunter2"));
        ep.timeout = 0.0;
        assert!(ep.validate().is_err());
    }
}
