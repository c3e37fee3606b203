//! HTTP client for an external detection service.
//!
//! `POST {endpoint}/detect` with `{"image": <base64 PNG>, "prompt": ..,
//! "threshold": ..}`; the reply is `{"detections": [{x, y, w, h, score}]}`
//! in lower-left-anchored pixel units. Any status other than 200 is a
//! transport error.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{check_prompt, sanitize, DetectRequest, Detection, Detector, DetectorError};
use crate::render::BoundingBox;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8700`.
    pub endpoint: String,
    pub threshold: f64,
    pub timeout_secs: f64,
    /// Extra attempts after a connection failure or 5xx reply.
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "http://127.0.0.1:8700".into(),
            threshold: DEFAULT_THRESHOLD,
            timeout_secs: 60.0,
            retries: 2,
            retry_backoff_ms: 200,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    image: String,
    prompt: &'a str,
    threshold: f64,
}

#[derive(Deserialize)]
struct WireBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    score: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    detections: Vec<WireBox>,
}

struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n.max(1)),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cond.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cond.notify_one();
    }
}

enum Failure {
    Retry(String),
    Fatal(DetectorError),
}

pub struct RemoteDetector {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Semaphore,
}

impl std::fmt::Debug for RemoteDetector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteDetector").field("config", &self.config).finish()
    }
}

impl RemoteDetector {
    pub fn new(config: RemoteConfig) -> Result<Self, DetectorError> {
        if !(0.0..=1.0).contains(&config.threshold) {
            return Err(DetectorError::Protocol(format!("threshold {} outside [0, 1]", config.threshold)));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(DetectorError::Protocol("timeout must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .into();
        Ok(RemoteDetector {
            slots: Semaphore::new(config.max_in_flight),
            config,
            agent,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    /// `GET /health`; returns the response body on 200.
    pub fn health(&self) -> Result<String, DetectorError> {
        let mut resp = self
            .agent
            .get(self.url("/health"))
            .call()
            .map_err(|e| DetectorError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        if status != 200 {
            return Err(DetectorError::Transport(format!("health check returned HTTP {status}")));
        }
        Ok(body)
    }

    fn attempt(&self, body: &str) -> Result<Vec<WireBox>, Failure> {
        let _permit = self.slots.acquire();
        let mut resp = self
            .agent
            .post(self.url("/detect"))
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string();
        if status != 200 {
            let msg = format!("HTTP {status}");
            return Err(if status >= 500 {
                Failure::Retry(msg)
            } else {
                Failure::Fatal(DetectorError::Transport(msg))
            });
        }
        let text = text.map_err(|e| Failure::Retry(e.to_string()))?;
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(DetectorError::Protocol(e.to_string())))?;
        Ok(parsed.detections)
    }
}

impl Detector for RemoteDetector {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        check_prompt(request)?;
        let r = request.render;
        let png = r.encode_png().map_err(|e| DetectorError::Encode(e.to_string()))?;
        let body = serde_json::to_string(&WireRequest {
            image: base64::engine::general_purpose::STANDARD.encode(png),
            prompt: request.prompt,
            threshold: self.config.threshold,
        })
        .expect("request serializes");

        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let wait = self.config.retry_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
                log::warn!("retrying detector request ({attempt}/{}): {last}", self.config.retries);
            }
            match self.attempt(&body) {
                Ok(boxes) => {
                    let detections = boxes
                        .into_iter()
                        .filter(|b| b.score >= self.config.threshold)
                        .map(|b| Detection {
                            bbox: BoundingBox::new(b.x, b.y, b.w, b.h),
                            score: b.score,
                            prompt_index: request.prompt_index,
                            view_index: request.view_index,
                        })
                        .collect();
                    return Ok(sanitize(detections, r.width, r.height));
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => last = msg,
            }
        }
        Err(DetectorError::Transport(last))
    }
}
