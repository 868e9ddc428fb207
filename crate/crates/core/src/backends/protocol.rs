//! JSON bodies of the model-bridge HTTP protocol.
//!
//! * `POST /v1/segment`: [`SegmentRequest`] -> [`SegmentResponse`]
//! * `POST /v1/detect`: [`DetectRequest`] -> [`DetectResponse`]
//! * `GET /v1/health`: [`HealthResponse`]
//!
//! Masks travel as row-major `[start, len, ...]` runs over foreground cells
//! and must match the submitted image's dimensions. A 422 status marks a
//! malformed request, 503 a model that is busy or not loaded.

use serde::{Deserialize, Serialize};

pub const SEGMENT_PATH: &str = "/v1/segment";
pub const DETECT_PATH: &str = "/v1/detect";
pub const HEALTH_PATH: &str = "/v1/health";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    Auto,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image_png_b64: String,
    pub points: Vec<[u32; 2]>,
    pub mode: SegmentMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMask {
    pub rle: Vec<u32>,
    pub width: u32,
    pub height: u32,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<WireMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image_png_b64: String,
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireBox {
    pub class_index: usize,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub boxes: Vec<WireBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub segmenter: bool,
    pub detector: bool,
}
