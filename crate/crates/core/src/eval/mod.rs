//! Per-part IoU, benchmark runs over labeled mesh sets, and ablation sweeps.

mod manifest;
mod sweep;

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_labels, Manifest, PartEntry, ShapeEntry};
pub use sweep::{ablation_sweep, parse_color, SweepAxis, SweepRow, SweepTable, N_VIEWS_GRID};

use crate::detector::{Detector, ReplayDetector};
use crate::mesh::{load_mesh, vote_face_label, Mesh};
use crate::pipeline::{build_detector, ground_truth_faces, segment, DetectorKind, PipelineConfig, PipelineError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction has {pred} labels but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("label {label} outside -1..{parts}")]
    LabelOutOfRange { label: i32, parts: usize },
    #[error("manifest lists no shapes")]
    EmptyManifest,
    #[error("manifest lists no parts")]
    NoParts,
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad label file {path}: {reason}")]
    Labels { path: PathBuf, reason: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("report serialization failed: {0}")]
    Report(String),
}

impl EvalError {
    pub fn is_transport(&self) -> bool {
        matches!(self, EvalError::Pipeline(p) if p.is_transport())
    }
}

fn check_labels(labels: &[i32], parts: usize) -> Result<(), EvalError> {
    match labels.iter().find(|&&l| l < -1 || l >= parts as i32) {
        Some(&label) => Err(EvalError::LabelOutOfRange { label, parts }),
        None => Ok(()),
    }
}

/// IoU of every part; `None` where the part appears in neither labeling.
/// Label -1 counts as "not this part" everywhere.
pub fn iou_per_part(pred: &[i32], gt: &[i32], parts: usize) -> Result<Vec<Option<f64>>, EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    check_labels(pred, parts)?;
    check_labels(gt, parts)?;
    let mut inter = vec![0usize; parts];
    let mut union = vec![0usize; parts];
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            if p >= 0 {
                inter[p as usize] += 1;
                union[p as usize] += 1;
            }
            continue;
        }
        if p >= 0 {
            union[p as usize] += 1;
        }
        if g >= 0 {
            union[g as usize] += 1;
        }
    }
    Ok(inter
        .iter()
        .zip(&union)
        .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
        .collect())
}

/// Mean over the defined entries.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum ShapeStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub mesh: String,
    pub category: String,
    #[serde(flatten)]
    pub status: ShapeStatus,
    /// Indexed like the manifest parts.
    pub part_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    /// Ground-truth face count per part.
    pub face_counts: Vec<usize>,
}

impl ShapeReport {
    pub fn failed(mesh: &str, category: &str, reason: String, parts: usize) -> Self {
        ShapeReport {
            mesh: mesh.to_string(),
            category: category.to_string(),
            status: ShapeStatus::Failed(reason),
            part_iou: vec![None; parts],
            miou: None,
            face_counts: vec![0; parts],
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ShapeStatus::Ok
    }

    /// Scores one prediction against its ground truth, both as part indices.
    pub fn scored(mesh: &str, category: &str, pred: &[i32], gt: &[i32], parts: usize) -> Result<Self, EvalError> {
        let part_iou = iou_per_part(pred, gt, parts)?;
        let mut face_counts = vec![0; parts];
        for &g in gt.iter().filter(|&&g| g >= 0) {
            face_counts[g as usize] += 1;
        }
        Ok(ShapeReport {
            mesh: mesh.to_string(),
            category: category.to_string(),
            status: ShapeStatus::Ok,
            miou: mean_defined(&part_iou),
            part_iou,
            face_counts,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSummary {
    pub class_id: i32,
    pub prompt: String,
    /// Mean IoU over the shapes where the part was defined.
    pub iou: Option<f64>,
    pub shapes: usize,
    pub faces: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: String,
    pub part_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub shapes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartIoUReport {
    pub parts: Vec<PartSummary>,
    pub categories: Vec<CategorySummary>,
    /// Mean of the per-part IoUs.
    pub overall: Option<f64>,
    pub failed: usize,
    pub shapes: Vec<ShapeReport>,
}

fn part_means(shapes: &[&ShapeReport], parts: usize) -> (Vec<Option<f64>>, Vec<usize>) {
    let mut sums = vec![0.0; parts];
    let mut counts = vec![0usize; parts];
    for s in shapes {
        for (k, v) in s.part_iou.iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
        }
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    (means, counts)
}

impl PartIoUReport {
    /// Averages each part across shapes, then parts within each category
    /// and overall. Failed shapes are listed but contribute nothing.
    pub fn summarize(parts: &[PartEntry], shapes: Vec<ShapeReport>) -> Self {
        let k = parts.len();
        let ok: Vec<&ShapeReport> = shapes.iter().filter(|s| s.is_ok()).collect();
        let (means, counts) = part_means(&ok, k);
        let mut faces = vec![0; k];
        for s in &ok {
            for (f, c) in faces.iter_mut().zip(&s.face_counts) {
                *f += c;
            }
        }
        let mut by_cat: BTreeMap<&str, Vec<&ShapeReport>> = BTreeMap::new();
        for s in &ok {
            by_cat.entry(s.category.as_str()).or_default().push(s);
        }
        let categories = by_cat
            .into_iter()
            .map(|(name, members)| {
                let (part_iou, _) = part_means(&members, k);
                CategorySummary {
                    category: name.to_string(),
                    miou: mean_defined(&part_iou),
                    part_iou,
                    shapes: members.len(),
                }
            })
            .collect();
        PartIoUReport {
            parts: parts
                .iter()
                .enumerate()
                .map(|(i, p)| PartSummary {
                    class_id: p.class_id,
                    prompt: p.prompt.clone(),
                    iou: means[i],
                    shapes: counts[i],
                    faces: faces[i],
                })
                .collect(),
            categories,
            overall: mean_defined(&means),
            failed: shapes.len() - ok.len(),
            shapes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per part, per category and part, per category mean, and the
    /// overall mean. Undefined values are left empty.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let err = |e: csv::Error| EvalError::Report(e.to_string());
        w.write_record(["scope", "category", "part", "iou", "shapes"]).map_err(err)?;
        for p in &self.parts {
            w.write_record(["part", "", &p.prompt, &fmt(p.iou), &p.shapes.to_string()])
                .map_err(err)?;
        }
        for c in &self.categories {
            for (p, v) in self.parts.iter().zip(&c.part_iou) {
                w.write_record(["category_part", &c.category, &p.prompt, &fmt(*v), &c.shapes.to_string()])
                    .map_err(err)?;
            }
            w.write_record(["category", &c.category, "", &fmt(c.miou), &c.shapes.to_string()])
                .map_err(err)?;
        }
        let used = self.shapes.len() - self.failed;
        w.write_record(["overall", "", "", &fmt(self.overall), &used.to_string()])
            .map_err(err)?;
        let bytes = w.into_inner().map_err(|e| EvalError::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Maps ground-truth class ids onto part indices; unknown ids become -1.
pub fn classes_to_parts(gt: &[i32], parts: &[PartEntry]) -> Vec<i32> {
    let index: BTreeMap<i32, i32> = parts.iter().enumerate().map(|(i, p)| (p.class_id, i as i32)).collect();
    gt.iter().map(|c| index.get(c).copied().unwrap_or(-1)).collect()
}

/// Segments `mesh` and scores it. `gt` holds class ids.
pub fn evaluate_mesh(
    mesh: &Mesh,
    gt: &[i32],
    parts: &[PartEntry],
    cfg: &PipelineConfig,
    detector: &dyn Detector,
) -> Result<(Vec<i32>, Vec<Option<f64>>), EvalError> {
    let prompts: Vec<String> = parts.iter().map(|p| p.prompt.clone()).collect();
    let seg = segment(mesh, &prompts, cfg, detector)?;
    let truth = classes_to_parts(gt, parts);
    let ious = iou_per_part(&seg.labels, &truth, parts.len())?;
    Ok((seg.labels, ious))
}

fn face_truth(mesh: &Mesh, entry: &ShapeEntry) -> Result<Vec<i32>, EvalError> {
    let labels = match &entry.labels {
        Some(path) => load_labels(path)?,
        None => {
            return ground_truth_faces(mesh)
                .ok_or_else(|| EvalError::Manifest(format!("{} has no labels", entry.mesh.display())))
        }
    };
    if labels.len() == mesh.num_faces() {
        Ok(labels)
    } else if labels.len() == mesh.num_vertices() {
        Ok(mesh
            .faces
            .iter()
            .map(|f| vote_face_label([labels[f[0]], labels[f[1]], labels[f[2]]]))
            .collect())
    } else {
        Err(EvalError::Labels {
            path: entry.labels.clone().unwrap_or_default(),
            reason: format!(
                "{} labels for {} faces and {} vertices",
                labels.len(),
                mesh.num_faces(),
                mesh.num_vertices()
            ),
        })
    }
}

fn run_shape(entry: &ShapeEntry, parts: &[PartEntry], cfg: &PipelineConfig) -> Result<ShapeReport, EvalError> {
    let mesh = load_mesh(&entry.mesh, None).map_err(PipelineError::from)?;
    let gt = face_truth(&mesh, entry)?;
    let classes: Vec<i32> = parts.iter().map(|p| p.class_id).collect();
    let detector: Box<dyn Detector> = match (cfg.detector.kind, &entry.detections) {
        (DetectorKind::Replay, Some(path)) => Box::new(ReplayDetector::load(path).map_err(PipelineError::from)?),
        _ => build_detector(&cfg.detector, Some((&mesh, &gt)), &classes)?,
    };
    let (pred, _) = evaluate_mesh(&mesh, &gt, parts, cfg, detector.as_ref())?;
    ShapeReport::scored(
        &entry.mesh.display().to_string(),
        &entry.category,
        &pred,
        &classes_to_parts(&gt, parts),
        parts.len(),
    )
}

/// Runs the pipeline on every manifest shape. A shape that fails is
/// reported as failed and left out of the averages, except that a detector
/// transport failure aborts the run.
pub fn run_benchmark(manifest: &Manifest, cfg: &PipelineConfig) -> Result<PartIoUReport, EvalError> {
    if manifest.shapes.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    if manifest.parts.is_empty() {
        return Err(EvalError::NoParts);
    }
    cfg.validate().map_err(PipelineError::from)?;
    let k = manifest.parts.len();
    let results: Vec<Result<ShapeReport, EvalError>> = manifest
        .shapes
        .par_iter()
        .map(|entry| run_shape(entry, &manifest.parts, cfg))
        .collect();
    let mut shapes = Vec::with_capacity(results.len());
    for (entry, result) in manifest.shapes.iter().zip(results) {
        match result {
            Ok(r) => shapes.push(r),
            Err(e) if e.is_transport() => return Err(e),
            Err(e) => {
                log::warn!("{}: {e}", entry.mesh.display());
                shapes.push(ShapeReport::failed(
                    &entry.mesh.display().to_string(),
                    &entry.category,
                    e.to_string(),
                    k,
                ));
            }
        }
    }
    Ok(PartIoUReport::summarize(&manifest.parts, shapes))
}
