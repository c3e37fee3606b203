//! Versioned JSON record of a detection pass, and a detector that replays it.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{DetectRequest, Detection, Detector, DetectorError};
use crate::render::BoundingBox;

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEntry {
    pub view_index: usize,
    pub prompt_index: usize,
    pub detections: Vec<BoxRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub version: u32,
    pub views: Vec<RecordEntry>,
}

impl Default for DetectionRecord {
    fn default() -> Self {
        DetectionRecord {
            version: RECORD_VERSION,
            views: Vec::new(),
        }
    }
}

impl DetectionRecord {
    /// Groups detections by (view, prompt), sorted by key; order within a
    /// key is preserved.
    pub fn from_detections<'a>(detections: impl IntoIterator<Item = &'a Detection>) -> Self {
        let mut map: BTreeMap<(usize, usize), Vec<BoxRecord>> = BTreeMap::new();
        for d in detections {
            map.entry((d.view_index, d.prompt_index)).or_default().push(BoxRecord {
                x: d.bbox.x,
                y: d.bbox.y,
                w: d.bbox.w,
                h: d.bbox.h,
                score: d.score,
            });
        }
        Self::from_map(map)
    }

    /// Like [`Self::from_detections`] but with an entry for every
    /// (view, prompt) pair, including those that returned nothing.
    pub fn complete<'a>(
        detections: impl IntoIterator<Item = &'a Detection>,
        views: usize,
        prompts: usize,
    ) -> Self {
        let mut map: BTreeMap<(usize, usize), Vec<BoxRecord>> = BTreeMap::new();
        for v in 0..views {
            for p in 0..prompts {
                map.insert((v, p), Vec::new());
            }
        }
        let mut rec = Self::from_detections(detections);
        for e in rec.views.drain(..) {
            map.insert((e.view_index, e.prompt_index), e.detections);
        }
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<(usize, usize), Vec<BoxRecord>>) -> Self {
        DetectionRecord {
            version: RECORD_VERSION,
            views: map
                .into_iter()
                .map(|((view_index, prompt_index), detections)| RecordEntry {
                    view_index,
                    prompt_index,
                    detections,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.version != RECORD_VERSION {
            return Err(DetectorError::RecordVersion {
                found: self.version,
                expected: RECORD_VERSION,
            });
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.views {
            if !seen.insert((e.view_index, e.prompt_index)) {
                return Err(DetectorError::InvalidRecord(format!(
                    "duplicate entry for view {} prompt {}",
                    e.view_index, e.prompt_index
                )));
            }
            for b in &e.detections {
                let finite = [b.x, b.y, b.w, b.h, b.score].iter().all(|v| v.is_finite());
                if !finite || b.w < 0.0 || b.h < 0.0 || !(0.0..=1.0).contains(&b.score) {
                    return Err(DetectorError::InvalidRecord(format!(
                        "bad box in view {} prompt {}",
                        e.view_index, e.prompt_index
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        // check the version before the schema so old files get a clear error
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| DetectorError::InvalidRecord(e.to_string()))?;
        let version = raw.get("version").and_then(|v| v.as_u64());
        match version {
            Some(v) if v == RECORD_VERSION as u64 => {}
            Some(v) => {
                return Err(DetectorError::RecordVersion {
                    found: v.min(u32::MAX as u64) as u32,
                    expected: RECORD_VERSION,
                })
            }
            None => return Err(DetectorError::InvalidRecord("missing version".into())),
        }
        let rec: DetectionRecord =
            serde_json::from_value(raw).map_err(|e| DetectorError::InvalidRecord(e.to_string()))?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<(), DetectorError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Replays a record; queries with no entry return no detections.
#[derive(Debug, Clone, Default)]
pub struct ReplayDetector {
    entries: BTreeMap<(usize, usize), Vec<BoxRecord>>,
}

impl ReplayDetector {
    pub fn new(record: DetectionRecord) -> Result<Self, DetectorError> {
        record.validate()?;
        Ok(ReplayDetector {
            entries: record
                .views
                .into_iter()
                .map(|e| ((e.view_index, e.prompt_index), e.detections))
                .collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        Self::new(DetectionRecord::load(path)?)
    }
}

impl Detector for ReplayDetector {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        let boxes = self
            .entries
            .get(&(request.view_index, request.prompt_index))
            .map(Vec::as_slice)
            .unwrap_or_default();
        Ok(boxes
            .iter()
            .map(|b| Detection {
                bbox: BoundingBox::new(b.x, b.y, b.w, b.h),
                score: b.score,
                prompt_index: request.prompt_index,
                view_index: request.view_index,
            })
            .collect())
    }
}

/// Wraps a detector and keeps every answer it gives.
#[derive(Debug)]
pub struct RecordingDetector<D> {
    inner: D,
    seen: Mutex<BTreeMap<(usize, usize), Vec<BoxRecord>>>,
}

impl<D: Detector> RecordingDetector<D> {
    pub fn new(inner: D) -> Self {
        RecordingDetector {
            inner,
            seen: Mutex::new(BTreeMap::new()),
        }
    }

    /// Everything recorded so far, including queries that returned nothing.
    pub fn record(&self) -> DetectionRecord {
        DetectionRecord::from_map(self.seen.lock().expect("recorder lock").clone())
    }
}

impl<D: Detector> Detector for RecordingDetector<D> {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        let out = self.inner.detect(request)?;
        let boxes = out
            .iter()
            .map(|d| BoxRecord {
                x: d.bbox.x,
                y: d.bbox.y,
                w: d.bbox.w,
                h: d.bbox.h,
                score: d.score,
            })
            .collect();
        self.seen
            .lock()
            .expect("recorder lock")
            .insert((request.view_index, request.prompt_index), boxes);
        Ok(out)
    }
}
