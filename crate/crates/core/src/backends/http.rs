use std::io::Read;

use super::wire::ErrorBody;
use super::{AudioMode, BackendEndpoint, BackendError, EndpointKind, Transport};

/// JSON-over-HTTP transport for a remote model service.
pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    auth_token: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &BackendEndpoint) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(endpoint.timeout())
            .build();
        Self {
            agent,
            base_url: endpoint.base_url.trim_end_matches('/').to_string(),
            auth_token: endpoint.auth_token.clone(),
        }
    }
}

fn read_body(resp: ureq::Response) -> std::io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    resp.into_reader().read_to_end(&mut buf)?;
    Ok(buf)
}

impl Transport for HttpTransport {
    fn post(&self, kind: EndpointKind, body: &[u8]) -> Result<Vec<u8>, BackendError> {
        let url = format!("{}{}", self.base_url, kind.route());
        let mut req = self
            .agent
            .post(&url)
            .set("Content-Type", "application/json");
        if let Some(token) = &self.auth_token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        match req.send_bytes(body) {
            Ok(resp) => read_body(resp).map_err(|e| BackendError::transport(e.to_string())),
            Err(ureq::Error::Status(status, resp)) => {
                let raw = read_body(resp).unwrap_or_default();
                let (error_code, message) = match serde_json::from_slice::<ErrorBody>(&raw) {
                    Ok(b) => (b.error_code, b.message),
                    Err(_) => (
                        "unknown".to_string(),
                        String::from_utf8_lossy(&raw).into_owned(),
                    ),
                };
                Err(BackendError::Backend {
                    status,
                    error_code,
                    message,
                })
            }
            Err(ureq::Error::Transport(t)) => Err(BackendError::transport(t.to_string())),
        }
    }

    fn audio_mode(&self) -> AudioMode {
        AudioMode::Inline
    }
}
