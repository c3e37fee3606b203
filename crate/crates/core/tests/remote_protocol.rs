//! Wire-protocol tests for the remote detector against an in-process stub.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine;
use satr::detector::{DetectRequest, Detector, DetectorError, RemoteConfig, RemoteDetector};
use satr::fixtures::{make_fixture, FixtureKind};
use satr::render::{decode_png, rasterize, Camera, RenderOutput, RenderSettings};
use serde_json::{json, Value};

type Handler = dyn Fn(usize, &str, &str) -> (u16, String) + Send + Sync;

struct Stub {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
    peak: Arc<AtomicUsize>,
}

/// Serves each request on its own thread. The handler gets the request
/// ordinal, method+path and body, and returns status and body.
fn stub(handler: Box<Handler>) -> Stub {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let active = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let handler: Arc<Handler> = Arc::from(handler);
    {
        let (hits, bodies, peak) = (hits.clone(), bodies.clone(), peak.clone());
        thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let (hits, bodies, active, peak, handler) =
                    (hits.clone(), bodies.clone(), active.clone(), peak.clone(), handler.clone());
                thread::spawn(move || {
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let n = hits.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    req.as_reader().read_to_string(&mut body).unwrap();
                    let route = format!("{} {}", req.method(), req.url());
                    bodies.lock().unwrap().push(body.clone());
                    let (status, reply) = handler(n, &route, &body);
                    active.fetch_sub(1, Ordering::SeqCst);
                    let _ = req.respond(tiny_http::Response::from_string(reply).with_status_code(status));
                });
            }
        });
    }
    Stub { url, hits, bodies, peak }
}

fn view() -> RenderOutput {
    let m = make_fixture(FixtureKind::Snowman).mesh;
    rasterize(&m, &Camera::orbit(0.2, 0.4), &RenderSettings::square(64), None).unwrap()
}

fn client(url: &str) -> RemoteDetector {
    RemoteDetector::new(RemoteConfig {
        endpoint: url.to_string(),
        retry_backoff_ms: 1,
        timeout_secs: 5.0,
        ..RemoteConfig::default()
    })
    .unwrap()
}

fn ask(d: &RemoteDetector, r: &RenderOutput, prompt: &str) -> Result<Vec<satr::detector::Detection>, DetectorError> {
    d.detect(&DetectRequest {
        view_index: 4,
        prompt_index: 1,
        prompt,
        render: r,
    })
}

#[test]
fn request_carries_png_prompt_and_threshold() {
    let s = stub(Box::new(|_, route, _| {
        assert_eq!(route, "POST /detect");
        let reply = json!({"detections": [
            {"x": 10.0, "y": 12.0, "w": 20.0, "h": 8.0, "score": 0.9},
            {"x": 1.0, "y": 1.0, "w": 5.0, "h": 5.0, "score": 0.3},
            {"x": 50.0, "y": -10.0, "w": 40.0, "h": 30.0, "score": 0.75}
        ]});
        (200, reply.to_string())
    }));
    let r = view();
    let got = ask(&client(&s.url), &r, "a snowman's head").unwrap();

    let sent: Value = serde_json::from_str(&s.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(sent["prompt"], "a snowman's head");
    assert_eq!(sent["threshold"], 0.5);
    let png = base64::engine::general_purpose::STANDARD
        .decode(sent["image"].as_str().unwrap())
        .unwrap();
    let (w, h, pixels) = decode_png(&png).unwrap();
    assert_eq!((w, h), (64, 64));
    assert_eq!(pixels, r.image);

    // below-threshold box dropped, out-of-image box clamped
    assert_eq!(got.len(), 2);
    assert_eq!((got[0].bbox.x, got[0].bbox.y, got[0].bbox.w, got[0].bbox.h), (10.0, 12.0, 20.0, 8.0));
    assert_eq!((got[1].bbox.x, got[1].bbox.y, got[1].bbox.w, got[1].bbox.h), (50.0, 0.0, 14.0, 20.0));
    assert!(got.iter().all(|d| d.view_index == 4 && d.prompt_index == 1));
}

#[test]
fn empty_list_is_a_valid_answer() {
    let s = stub(Box::new(|_, _, _| (200, r#"{"detections": []}"#.into())));
    assert!(ask(&client(&s.url), &view(), "arm").unwrap().is_empty());
}

#[test]
fn client_errors_are_not_retried() {
    let s = stub(Box::new(|_, _, _| (400, "bad".into())));
    let err = ask(&client(&s.url), &view(), "arm").unwrap_err();
    assert!(matches!(err, DetectorError::Transport(ref m) if m.contains("400")), "{err}");
    assert_eq!(s.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn server_errors_are_retried() {
    let s = stub(Box::new(|n, _, _| {
        if n == 0 {
            (503, "loading".into())
        } else {
            (200, r#"{"detections": [{"x": 0, "y": 0, "w": 3, "h": 3, "score": 1.0}]}"#.into())
        }
    }));
    assert_eq!(ask(&client(&s.url), &view(), "arm").unwrap().len(), 1);
    assert_eq!(s.hits.load(Ordering::SeqCst), 2);

    let down = stub(Box::new(|_, _, _| (500, "boom".into())));
    assert!(matches!(ask(&client(&down.url), &view(), "arm"), Err(DetectorError::Transport(_))));
    assert_eq!(down.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn malformed_reply_is_a_protocol_error() {
    let s = stub(Box::new(|_, _, _| (200, r#"{"boxes": []}"#.into())));
    assert!(matches!(ask(&client(&s.url), &view(), "arm"), Err(DetectorError::Protocol(_))));
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let d = client(&format!("http://127.0.0.1:{port}"));
    assert!(matches!(ask(&d, &view(), "arm"), Err(DetectorError::Transport(_))));
}

#[test]
fn in_flight_requests_are_bounded() {
    let s = stub(Box::new(|_, _, _| {
        thread::sleep(Duration::from_millis(80));
        (200, r#"{"detections": []}"#.into())
    }));
    let d = Arc::new(
        RemoteDetector::new(RemoteConfig {
            endpoint: s.url.clone(),
            max_in_flight: 2,
            ..RemoteConfig::default()
        })
        .unwrap(),
    );
    let r = Arc::new(view());
    let workers: Vec<_> = (0..8)
        .map(|_| {
            let (d, r) = (d.clone(), r.clone());
            thread::spawn(move || ask(&d, &r, "leg").unwrap())
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    assert_eq!(s.hits.load(Ordering::SeqCst), 8);
    assert_eq!(s.peak.load(Ordering::SeqCst), 2);
}

#[test]
fn health_probe() {
    let s = stub(Box::new(|n, route, _| {
        assert_eq!(route, "GET /health");
        if n == 0 {
            (503, "loading".into())
        } else {
            (200, r#"{"status": "ok", "model_id": "stub"}"#.into())
        }
    }));
    let d = client(&s.url);
    assert!(d.health().is_err());
    assert!(d.health().unwrap().contains("stub"));
}

#[test]
fn bad_threshold_rejected() {
    let cfg = RemoteConfig {
        threshold: 1.5,
        ..RemoteConfig::default()
    };
    assert!(RemoteDetector::new(cfg).is_err());
}
