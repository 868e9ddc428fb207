use std::thread;
use std::time::Duration;

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    DetectRequest, DetectResponse, HealthResponse, SegmentMode, SegmentRequest, SegmentResponse, DETECT_PATH,
    HEALTH_PATH, SEGMENT_PATH,
};
use super::{check_in_bounds, BackendError, DetectionBox, Detector, Mask2D, Rle, Segmenter, TextPrompt};
use crate::formats::encode_png;
use crate::multiview::{Pixel, RenderProduct};

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

/// Retries on retryable failures with exponential backoff:
/// `base, 2 * base, 4 * base, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { retries: 3, base_delay: Duration::from_millis(200) }
    }
}

/// HTTP client for a model bridge serving the segment/detect protocol.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    base_url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RemoteClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_policy(base_url, RetryPolicy::default(), Duration::from_secs(120))
    }

    pub fn with_policy(base_url: impl Into<String>, retry: RetryPolicy, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), agent, retry }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn health(&self) -> Result<HealthResponse, BackendError> {
        self.with_retries(|| {
            let mut resp = self.agent.get(format!("{}{}", self.base_url, HEALTH_PATH)).call().map_err(classify)?;
            resp.body_mut().read_json().map_err(|e| BackendError::Protocol(e.to_string()))
        })
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = format!("{}{}", self.base_url, path);
        self.with_retries(|| {
            let mut resp = self.agent.post(&url).send_json(body).map_err(classify)?;
            resp.body_mut()
                .with_config()
                .limit(MAX_RESPONSE_BYTES)
                .read_json()
                .map_err(|e| BackendError::Protocol(e.to_string()))
        })
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_retryable() && attempt < self.retry.retries => {
                    let delay = self.retry.base_delay * 2u32.pow(attempt);
                    log::warn!("{}: {e}; retrying in {delay:?}", self.base_url);
                    thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn segment(&self, rp: &RenderProduct, points: &[Pixel], mode: SegmentMode) -> Result<Vec<Mask2D>, BackendError> {
        check_in_bounds(rp, points)?;
        let req =
            SegmentRequest { image_png_b64: image_b64(rp)?, points: points.iter().map(|p| [p.x, p.y]).collect(), mode };
        let resp: SegmentResponse = self.post(SEGMENT_PATH, &req)?;
        let (w, h) = (rp.width() as u32, rp.height() as u32);
        resp.masks
            .into_iter()
            .map(|m| {
                if (m.width, m.height) != (w, h) {
                    return Err(BackendError::Protocol(format!("mask is {}x{}, image is {w}x{h}", m.width, m.height)));
                }
                let rle =
                    Rle::from_flat(&m.rle, w as u64 * h as u64).map_err(|e| BackendError::Protocol(e.to_string()))?;
                Ok(Mask2D { viewpoint_id: rp.viewpoint_id(), width: w, height: h, rle, score: m.score })
            })
            .collect()
    }
}

fn image_b64(rp: &RenderProduct) -> Result<String, BackendError> {
    let png = encode_png(rp).map_err(|e| BackendError::Rejected(format!("png encoding: {e}")))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(png))
}

fn classify(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::StatusCode(code) if code == 503 || code == 502 || code == 504 || code == 429 => {
            BackendError::Unavailable(format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => BackendError::Rejected(format!("HTTP {code}")),
        ureq::Error::Io(_)
        | ureq::Error::Timeout(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::Protocol(_) => BackendError::Unavailable(err.to_string()),
        other => BackendError::Rejected(other.to_string()),
    }
}

impl Segmenter for RemoteClient {
    fn segment_auto(&self, rp: &RenderProduct, seeds: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        self.segment(rp, seeds, SegmentMode::Auto)
    }

    fn segment_prompted(&self, rp: &RenderProduct, points: &[Pixel]) -> Result<Vec<Mask2D>, BackendError> {
        self.segment(rp, points, SegmentMode::Prompt)
    }
}

impl Detector for RemoteClient {
    fn detect(&self, rp: &RenderProduct, prompt: &TextPrompt) -> Result<Vec<DetectionBox>, BackendError> {
        let req = DetectRequest { image_png_b64: image_b64(rp)?, classes: prompt.class_names().to_vec() };
        let resp: DetectResponse = self.post(DETECT_PATH, &req)?;
        let (w, h) = (rp.width() as u32, rp.height() as u32);
        resp.boxes
            .into_iter()
            .map(|b| {
                if b.class_index >= prompt.len() || b.x0 > b.x1 || b.y0 > b.y1 || b.x1 >= w || b.y1 >= h {
                    return Err(BackendError::Protocol(format!("invalid box {b:?} for {w}x{h} image")));
                }
                Ok(DetectionBox {
                    viewpoint_id: rp.viewpoint_id(),
                    class_index: b.class_index,
                    x0: b.x0,
                    y0: b.y0,
                    x1: b.x1,
                    y1: b.y1,
                    score: b.score,
                })
            })
            .collect()
    }
}
