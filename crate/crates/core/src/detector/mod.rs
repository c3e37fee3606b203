//! 2D box detectors. Every backend answers one (view, prompt) query with
//! zero or more scored boxes in lower-left-anchored pixel coordinates.

mod oracle;
mod record;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::{BoundingBox, RenderOutput};

pub use oracle::{part_instances, tight_instance_boxes, tight_part_box, NoiseModel, OracleDetector, SPURIOUS_AREA_RANGE};
pub use record::{DetectionRecord, RecordEntry, RecordingDetector, ReplayDetector, RECORD_VERSION};
pub use remote::{RemoteConfig, RemoteDetector, DEFAULT_THRESHOLD};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("detector transport failure: {0}")]
    Transport(String),
    #[error("malformed detector response: {0}")]
    Protocol(String),
    #[error("detection record version {found}, expected {expected}")]
    RecordVersion { found: u32, expected: u32 },
    #[error("invalid detection record: {0}")]
    InvalidRecord(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(&'static str),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("prompt index {0} has no class mapping")]
    UnmappedPrompt(usize),
    #[error("{labels} face labels for a mesh with {faces} faces")]
    LabelCount { labels: usize, faces: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub prompt_index: usize,
    pub view_index: usize,
}

/// One detector query: a rendered view and a text prompt.
#[derive(Debug, Clone, Copy)]
pub struct DetectRequest<'a> {
    pub view_index: usize,
    pub prompt_index: usize,
    pub prompt: &'a str,
    pub render: &'a RenderOutput,
}

pub trait Detector: Send + Sync {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<Vec<Detection>, DetectorError>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        (**self).detect(request)
    }
}

impl<D: Detector + ?Sized> Detector for &D {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        (**self).detect(request)
    }
}

/// Clamps boxes to the image and scores to [0, 1], dropping boxes that end
/// up empty or are not finite.
pub fn sanitize(detections: Vec<Detection>, width: usize, height: usize) -> Vec<Detection> {
    detections
        .into_iter()
        .filter(|d| d.bbox.is_valid() && d.score.is_finite())
        .map(|d| Detection {
            bbox: d.bbox.clamped(width, height),
            score: d.score.clamp(0.0, 1.0),
            ..d
        })
        .filter(|d| d.bbox.area() > 0.0)
        .collect()
}

fn check_prompt(request: &DetectRequest<'_>) -> Result<(), DetectorError> {
    if request.prompt.trim().is_empty() {
        Err(DetectorError::EmptyPrompt)
    } else {
        Ok(())
    }
}
