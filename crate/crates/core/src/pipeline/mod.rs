//! End-to-end segmentation: normalize, render views, detect, score,
//! aggregate, normalize and label.

mod config;

use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

pub use config::{ConfigError, DetectorConfig, DetectorKind, PipelineConfig};

use crate::detector::{
    DetectRequest, Detection, DetectionRecord, Detector, DetectorError, OracleDetector, RemoteDetector,
    ReplayDetector,
};
use crate::geodesic::{Geodesics, SIGMA_FLOOR_FRACTION};
use crate::mesh::{build_q_ring, normalize_mesh, save_mesh, vote_face_label, Mesh, MeshError, MeshFormat, PlyEncoding};
use crate::render::{rasterize, sample_views, Camera, RenderError, RenderOutput, RenderSettings};
use crate::scoring::{
    assign_labels, normalize_scores, satr_view_scores, SatrContext, ScoreMatrix, ScoringError, ViewAccumulator,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("at least one prompt is required")]
    NoPrompts,
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// True for failures of the detector service rather than of the inputs.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            PipelineError::Detector(DetectorError::Transport(_) | DetectorError::Protocol(_))
        )
    }
}

pub const LABELED_MESH_FILE: &str = "segmentation.ply";
pub const DETECTIONS_FILE: &str = "detections.json";
pub const SCORES_FILE: &str = "scores.bin";
pub const CONFIG_FILE: &str = "config.toml";

/// Writes the effective config into `dir` as `config.toml`.
pub fn write_config(cfg: &PipelineConfig, dir: &Path) -> Result<(), PipelineError> {
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Fixed 20-entry class palette; label -1 renders gray.
pub const PALETTE: [[u8; 3]; 20] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [188, 189, 34],
    [23, 190, 207],
    [174, 199, 232],
    [255, 187, 120],
    [152, 223, 138],
    [255, 152, 150],
    [197, 176, 213],
    [196, 156, 148],
    [247, 182, 210],
    [219, 219, 141],
    [158, 218, 229],
    [57, 59, 121],
    [99, 121, 57],
];

pub const UNLABELED_COLOR: [u8; 3] = [128, 128, 128];

pub fn label_color(label: i32) -> [u8; 3] {
    if label < 0 {
        UNLABELED_COLOR
    } else {
        PALETTE[label as usize % PALETTE.len()]
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// Predicted class per face; -1 is background.
    pub labels: Vec<i32>,
    /// Aggregated scores before normalization.
    pub raw_scores: ScoreMatrix,
    /// Normalized scores the labels were read from.
    pub scores: ScoreMatrix,
    pub record: DetectionRecord,
    pub cameras: Vec<Camera>,
}

impl Segmentation {
    pub fn detection_count(&self) -> usize {
        self.record.views.iter().map(|e| e.detections.len()).sum()
    }

    /// Input mesh carrying the predicted labels and palette colors.
    pub fn write_ply(&self, mesh: &Mesh, path: &Path) -> Result<(), PipelineError> {
        let mut out = mesh.clone();
        out.face_labels = Some(self.labels.clone());
        let colors: Vec<[u8; 3]> = self.labels.iter().map(|&l| label_color(l)).collect();
        save_mesh(&out, path, MeshFormat::Ply, PlyEncoding::BinaryLittleEndian, Some(&colors))?;
        Ok(())
    }

    /// Labeled mesh, detection record, normalized score dump and config.
    pub fn write_outputs(&self, mesh: &Mesh, cfg: &PipelineConfig, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        self.write_ply(mesh, &dir.join(LABELED_MESH_FILE))?;
        self.record.save(&dir.join(DETECTIONS_FILE))?;
        self.scores.write(&dir.join(SCORES_FILE))?;
        write_config(cfg, dir)
    }
}

/// Face labels of a ground-truth mesh, taken from face labels or voted from
/// vertex labels.
pub fn ground_truth_faces(mesh: &Mesh) -> Option<Vec<i32>> {
    if let Some(l) = &mesh.face_labels {
        return Some(l.clone());
    }
    let v = mesh.vertex_labels.as_ref()?;
    Some(
        mesh.faces
            .iter()
            .map(|f| vote_face_label([v[f[0]], v[f[1]], v[f[2]]]))
            .collect(),
    )
}

/// Builds the configured detector. The oracle reads the ground-truth face
/// labels `gt` of `mesh` and maps prompt k to `classes[k]`.
pub fn build_detector(
    cfg: &DetectorConfig,
    truth: Option<(&Mesh, &[i32])>,
    classes: &[i32],
) -> Result<Box<dyn Detector>, PipelineError> {
    Ok(match cfg.kind {
        DetectorKind::Oracle => {
            let (mesh, gt) =
                truth.ok_or_else(|| PipelineError::Input("oracle detector needs a labeled mesh".into()))?;
            Box::new(OracleDetector::for_mesh(mesh, gt.to_vec(), classes.to_vec(), cfg.noise)?)
        }
        DetectorKind::Replay => {
            let path = cfg
                .replay
                .as_ref()
                .ok_or_else(|| PipelineError::Input("replay detector needs a detection record".into()))?;
            Box::new(ReplayDetector::load(path)?)
        }
        DetectorKind::Remote => Box::new(RemoteDetector::new(cfg.remote.clone())?),
    })
}

pub fn render_settings(cfg: &PipelineConfig) -> RenderSettings {
    RenderSettings {
        base_color: cfg.color,
        ..RenderSettings::square(cfg.resolution)
    }
}

pub fn cameras(cfg: &PipelineConfig) -> Result<Vec<Camera>, PipelineError> {
    Ok(sample_views(cfg.n_views, cfg.sampling, cfg.seed)?
        .into_iter()
        .map(|c| Camera {
            distance: cfg.camera_distance,
            fov_y: cfg.fov_y,
            ..c
        })
        .collect())
}

/// Renders every configured view of the normalized mesh.
pub fn render_views(mesh: &Mesh, cfg: &PipelineConfig) -> Result<Vec<RenderOutput>, PipelineError> {
    let norm = normalize_mesh(mesh)?;
    let settings = render_settings(cfg);
    cameras(cfg)?
        .par_iter()
        .map(|c| rasterize(&norm, c, &settings, None).map_err(PipelineError::from))
        .collect()
}

/// Runs the full pipeline on `mesh` for `prompts`.
pub fn segment(
    mesh: &Mesh,
    prompts: &[String],
    cfg: &PipelineConfig,
    detector: &dyn Detector,
) -> Result<Segmentation, PipelineError> {
    cfg.validate()?;
    if prompts.is_empty() {
        return Err(PipelineError::NoPrompts);
    }
    let norm = normalize_mesh(mesh)?;
    let k = prompts.len();
    let n = norm.num_faces();
    let cams = cameras(cfg)?;
    let settings = render_settings(cfg);

    let geodesics = match cfg.reweighting {
        crate::geodesic::Reweighting::None => None,
        _ => Some(Geodesics::new(&norm, cfg.geodesic)),
    };
    let qring = cfg.smoothing.then(|| build_q_ring(&norm, cfg.q));
    let ctx = SatrContext {
        mesh: &norm,
        geodesics: geodesics.as_ref(),
        qring: qring.as_ref(),
        reweighting: cfg.reweighting,
        capital: cfg.capital,
        sigma_floor: SIGMA_FLOOR_FRACTION * norm.diameter(),
    };

    let per_view: Vec<(ScoreMatrix, Vec<Detection>)> = cams
        .par_iter()
        .enumerate()
        .map(|(v, cam)| {
            let render = rasterize(&norm, cam, &settings, None)?;
            let mut detections = Vec::new();
            for (p, prompt) in prompts.iter().enumerate() {
                let found = detector.detect(&DetectRequest {
                    view_index: v,
                    prompt_index: p,
                    prompt,
                    render: &render,
                })?;
                detections.extend(found);
            }
            let scores = satr_view_scores(&render, &detections, k, &ctx)?;
            Ok((scores, detections))
        })
        .collect::<Result<_, PipelineError>>()?;

    let mut acc = ViewAccumulator::new(n, k, cfg.aggregation);
    let mut all = Vec::new();
    for (scores, detections) in &per_view {
        acc.add(scores)?;
        all.extend_from_slice(detections);
    }
    if all.is_empty() {
        log::warn!("no detections in any view; labels follow the tie-break policy");
    }
    let raw_scores = acc.finish();
    let scores = normalize_scores(&raw_scores, cfg.normalize);
    let labels = assign_labels(&scores, cfg.label_policy());
    let record = DetectionRecord::complete(&all, cams.len(), k);
    Ok(Segmentation {
        labels,
        raw_scores,
        scores,
        record,
        cameras: cams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{RecordingDetector, ReplayDetector};
    use crate::fixtures::snowman;
    use crate::mesh::load_mesh;

    fn prompts(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    fn quick() -> PipelineConfig {
        PipelineConfig {
            resolution: 256,
            ..PipelineConfig::default()
        }
    }

    fn iou(pred: &[i32], gt: &[i32], class: i32) -> f64 {
        let inter = pred.iter().zip(gt).filter(|(p, g)| **p == class && **g == class).count();
        let union = pred.iter().zip(gt).filter(|(p, g)| **p == class || **g == class).count();
        inter as f64 / union as f64
    }

    #[test]
    fn snowman_with_oracle_boxes() {
        let fx = snowman();
        let gt = ground_truth_faces(&fx.mesh).unwrap();
        let det = build_detector(&DetectorConfig::default(), Some((&fx.mesh, &gt)), &[0, 1]).unwrap();
        let seg = segment(&fx.mesh, &prompts(&["head", "body"]), &quick(), det.as_ref()).unwrap();
        assert!(iou(&seg.labels, &gt, 0) >= 0.9);
        assert!(iou(&seg.labels, &gt, 1) >= 0.9);
        assert_eq!(seg.record.views.len(), 10 * 2);
        assert_eq!(seg.cameras.len(), 10);
        assert!(seg.detection_count() > 0 && seg.detection_count() <= 20);
    }

    #[test]
    fn replay_reproduces_the_run() {
        let fx = snowman();
        let gt = ground_truth_faces(&fx.mesh).unwrap();
        let p = prompts(&["head", "body"]);
        let rec = RecordingDetector::new(OracleDetector::new(gt, vec![0, 1], Default::default()).unwrap());
        let a = segment(&fx.mesh, &p, &quick(), &rec).unwrap();
        assert_eq!(rec.record(), a.record);
        let replay = ReplayDetector::new(a.record.clone()).unwrap();
        let b = segment(&fx.mesh, &p, &quick(), &replay).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.raw_scores.to_bytes(), b.raw_scores.to_bytes());
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn silent_prompt_leaves_background() {
        let fx = snowman();
        let gt = ground_truth_faces(&fx.mesh).unwrap();
        let det = OracleDetector::new(gt, vec![9], Default::default()).unwrap();
        let cfg = PipelineConfig {
            background: Some(0.1),
            ..quick()
        };
        let seg = segment(&fx.mesh, &prompts(&["hat"]), &cfg, &det).unwrap();
        assert_eq!(seg.detection_count(), 0);
        assert!(seg.labels.iter().all(|&l| l == -1));
        assert_eq!(seg.record.views.len(), 10);
        assert!(matches!(
            segment(&fx.mesh, &[], &cfg, &det),
            Err(PipelineError::NoPrompts)
        ));
    }

    #[test]
    fn labeled_ply_carries_labels_and_palette() {
        let fx = snowman();
        let seg = Segmentation {
            labels: (0..fx.mesh.num_faces() as i32).map(|i| i % 3 - 1).collect(),
            raw_scores: ScoreMatrix::zeros(0, 0),
            scores: ScoreMatrix::zeros(0, 0),
            record: DetectionRecord::default(),
            cameras: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.ply");
        seg.write_ply(&fx.mesh, &path).unwrap();
        let back = load_mesh(&path, None).unwrap();
        assert_eq!(back.face_labels.as_ref(), Some(&seg.labels));
        assert_eq!(back.vertices, fx.mesh.vertices);
        assert_eq!(label_color(-1), UNLABELED_COLOR);
        assert_eq!(label_color(21), PALETTE[1]);
    }

    #[test]
    fn outputs_are_written() {
        let fx = snowman();
        let gt = ground_truth_faces(&fx.mesh).unwrap();
        let det = OracleDetector::new(gt, vec![0, 1], Default::default()).unwrap();
        let cfg = PipelineConfig {
            n_views: 2,
            ..quick()
        };
        let seg = segment(&fx.mesh, &prompts(&["head", "body"]), &cfg, &det).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        seg.write_outputs(&fx.mesh, &cfg, &out).unwrap();
        assert_eq!(ScoreMatrix::read(&out.join(SCORES_FILE)).unwrap(), seg.scores);
        assert_eq!(DetectionRecord::load(&out.join(DETECTIONS_FILE)).unwrap(), seg.record);
        assert_eq!(PipelineConfig::load(&out.join(CONFIG_FILE)).unwrap(), cfg);
        let back = load_mesh(&out.join(LABELED_MESH_FILE), None).unwrap();
        assert_eq!(back.face_labels.unwrap(), seg.labels);
    }

    #[test]
    fn error_classes() {
        let t = PipelineError::Detector(DetectorError::Transport("refused".into()));
        assert!(t.is_transport());
        assert!(!PipelineError::NoPrompts.is_transport());
        let cfg = DetectorConfig {
            kind: DetectorKind::Replay,
            ..DetectorConfig::default()
        };
        assert!(matches!(build_detector(&cfg, None, &[0]), Err(PipelineError::Input(_))));
        assert!(matches!(
            build_detector(&DetectorConfig::default(), None, &[0]),
            Err(PipelineError::Input(_))
        ));
    }
}
