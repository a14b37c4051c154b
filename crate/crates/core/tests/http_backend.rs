mod common;

use std::collections::HashMap;
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use avseg_core::backends::{
    audio_digest, AudioPayload, BackendEndpoint, BackendError, EndpointKind, HttpTransport,
    MockOptions, MockTransport, StageClient,
};
use avseg_core::{Pipeline, RunOptions};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde_json::{json, Value};

use common::{demo_copy, load_config, snapshot};

const TOKEN: &str = "s3cret";

/// Fronts a `MockTransport` with a real HTTP listener. Inline audio is swapped
/// for its digest so the mock can find its fixtures; the segment call carries
/// no audio, so the digest seen at transcription is replayed.
struct Server {
    url: String,
    requests: Arc<AtomicUsize>,
}

fn serve(mock: MockTransport) -> Server {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    let digests: Mutex<HashMap<String, String>> = Mutex::default();
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let authorized = req.headers().iter().any(|h| {
                h.field.equiv("Authorization") && h.value.as_str() == format!("Bearer {TOKEN}")
            });
            let mut raw = Vec::new();
            req.as_reader().read_to_end(&mut raw).unwrap();
            let (status, body) = if !authorized {
                (401, json!({"error_code": "unauthorized", "message": "bad token"}).to_string())
            } else {
                match EndpointKind::from_route(req.url()) {
                    None => (404, json!({"error_code": "no-route", "message": req.url()}).to_string()),
                    Some(kind) => {
                        let mut body: Value = serde_json::from_slice(&raw).unwrap();
                        let qid = body["query_id"].as_str().unwrap_or_default().to_string();
                        if let Some(b64) = body.get("audio_b64").and_then(Value::as_str) {
                            let digest = audio_digest(&BASE64.decode(b64).unwrap());
                            digests.lock().unwrap().insert(qid.clone(), digest.clone());
                            body.as_object_mut().unwrap().remove("audio_b64");
                            body["audio_digest"] = json!(digest);
                        } else if let Some(d) = digests.lock().unwrap().get(&qid) {
                            body["audio_digest"] = json!(d);
                        }
                        match mock.handle(kind, &serde_json::to_vec(&body).unwrap()) {
                            Ok(out) => (200, String::from_utf8(out).unwrap()),
                            Err(BackendError::Backend { status, error_code, message }) => (
                                status,
                                json!({"error_code": error_code, "message": message}).to_string(),
                            ),
                            Err(e) => (500, e.to_string()),
                        }
                    }
                }
            };
            let resp = tiny_http::Response::from_string(body).with_status_code(status);
            let _ = req.respond(resp);
        }
    });
    Server { url, requests }
}

fn endpoint(url: &str, token: Option<&str>) -> BackendEndpoint {
    let mut ep = BackendEndpoint::new(EndpointKind::Transcriber, url);
    ep.auth_token = token.map(str::to_string);
    ep.initial_backoff_ms = 1;
    ep.timeout = 2.0;
    ep
}

fn client(ep: BackendEndpoint) -> StageClient {
    let transport = Arc::new(HttpTransport::new(&ep));
    StageClient::new(ep, transport)
}

#[test]
fn pipeline_over_http_matches_in_process_mock() {
    let tmp = demo_copy();
    let server = serve(MockTransport::new(tmp.path().join("mock"), MockOptions::default()).unwrap());

    let mut local = load_config(tmp.path(), "with-gate.toml");
    local.output_dir = tmp.path().join("local");
    let mut remote = local.clone();
    remote.output_dir = tmp.path().join("remote");
    remote.workers = 3;
    for ep in &mut remote.endpoints {
        ep.base_url = server.url.clone();
        ep.auth_token = Some(TOKEN.into());
    }

    let a = Pipeline::new(local.clone()).unwrap().run_all(RunOptions::default()).unwrap();
    let b = Pipeline::new(remote.clone()).unwrap().run_all(RunOptions::default()).unwrap();
    assert_eq!(b.failures(), 0);
    assert_eq!(b.report.evaluation.as_ref().unwrap().final_score, 100.0);
    assert_eq!(a.report, b.report);
    assert_eq!(
        snapshot(&local.output_dir.join("predictions")),
        snapshot(&remote.output_dir.join("predictions"))
    );
    // 6 transcriptions, 6 gate calls, 3 segmentations
    assert_eq!(server.requests.load(Ordering::SeqCst), 15);
}

#[test]
fn error_bodies_become_backend_errors_without_retry() {
    let tmp = demo_copy();
    let server = serve(MockTransport::new(tmp.path().join("mock"), MockOptions::default()).unwrap());
    let audio = AudioPayload::new(b"RIFF not in the fixture set".to_vec());

    let err = client(endpoint(&server.url, None))
        .transcribe("q", &audio)
        .unwrap_err();
    assert!(matches!(
        &err,
        BackendError::Backend { status: 401, error_code, .. } if error_code == "unauthorized"
    ));

    let err = client(endpoint(&server.url, Some(TOKEN)))
        .transcribe("q", &audio)
        .unwrap_err();
    assert!(matches!(
        &err,
        BackendError::Backend { status: 404, error_code, .. } if error_code == "unknown-audio"
    ));
    assert_eq!(server.requests.load(Ordering::SeqCst), 2);
}

#[test]
fn transcript_round_trips_over_http() {
    let tmp = demo_copy();
    let server = serve(MockTransport::new(tmp.path().join("mock"), MockOptions::default()).unwrap());
    let audio = AudioPayload::load(&tmp.path().join("audio/panda-rolling.wav")).unwrap();
    let t = client(endpoint(&server.url, Some(TOKEN)))
        .transcribe("panda-rolling", &audio)
        .unwrap();
    assert_eq!(t.text, "the panda rolling on the ground");
    assert_eq!(t.confidence, 1.0);
}

#[test]
fn unreachable_endpoint_is_a_transport_failure() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let ep = endpoint(&format!("http://127.0.0.1:{port}"), Some(TOKEN));
    let err = client(ep)
        .transcribe("q", &AudioPayload::new(vec![1, 2, 3]))
        .unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err:?}");
}
