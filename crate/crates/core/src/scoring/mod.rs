//! Lifting per-view boxes to per-face scores, aggregating views,
//! normalizing and labeling.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::Detection;
use crate::geodesic::{capital_face, CapitalAverage, GeodesicError, Geodesics, Reweighting};
use crate::mesh::{Mesh, QRingIndex};
use crate::render::RenderOutput;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("score matrix shape {got:?} does not match {expected:?}")]
    ShapeMismatch {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("no views to aggregate")]
    NoViews,
    #[error("detection references prompt {prompt} but only {count} prompts exist")]
    PromptOutOfRange { prompt: usize, count: usize },
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error("geodesic reweighting requested without a distance backend")]
    MissingGeodesics,
    #[error("malformed score dump: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense faces x prompts matrix of nonnegative scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    faces: usize,
    prompts: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn zeros(faces: usize, prompts: usize) -> Self {
        ScoreMatrix {
            faces,
            prompts,
            values: vec![0.0; faces * prompts],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let prompts = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == prompts), "ragged rows");
        ScoreMatrix {
            faces: rows.len(),
            prompts,
            values: rows.concat(),
        }
    }

    pub fn num_faces(&self) -> usize {
        self.faces
    }

    pub fn num_prompts(&self) -> usize {
        self.prompts
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.faces, self.prompts)
    }

    pub fn get(&self, face: usize, prompt: usize) -> f64 {
        self.values[face * self.prompts + prompt]
    }

    pub fn set(&mut self, face: usize, prompt: usize, value: f64) {
        self.values[face * self.prompts + prompt] = value;
    }

    pub fn row(&self, face: usize) -> &[f64] {
        &self.values[face * self.prompts..(face + 1) * self.prompts]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, prompt: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.faces).map(move |f| self.get(f, prompt))
    }

    pub fn column_sum(&self, prompt: usize, faces: impl IntoIterator<Item = usize>) -> f64 {
        faces.into_iter().map(|f| self.get(f, prompt)).sum()
    }

    fn check_shape(&self, other: &ScoreMatrix) -> Result<(), ScoringError> {
        if self.shape() != other.shape() {
            return Err(ScoringError::ShapeMismatch {
                got: other.shape(),
                expected: self.shape(),
            });
        }
        Ok(())
    }

    /// u32 LE face count, u32 LE prompt count, then f64 LE values row by row.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.values.len());
        out.extend_from_slice(&(self.faces as u32).to_le_bytes());
        out.extend_from_slice(&(self.prompts as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ScoringError> {
        if bytes.len() < 8 {
            return Err(ScoringError::Format("missing header".into()));
        }
        let faces = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let prompts = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != 8 * faces * prompts {
            return Err(ScoringError::Format(format!(
                "expected {} value bytes for {faces}x{prompts}, found {}",
                8 * faces * prompts,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ScoreMatrix { faces, prompts, values })
    }

    pub fn write(&self, path: &Path) -> Result<(), ScoringError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ScoringError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewAggregation {
    #[default]
    Max,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeAxis {
    #[default]
    PerPrompt,
    PerFace,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPolicy {
    #[default]
    Argmax,
    /// Faces whose best score is below the threshold get label -1.
    ArgmaxWithBackground(f64),
}

macro_rules! from_str_enum {
    ($t:ty, $($s:literal => $v:expr),+) => {
        impl std::str::FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok($v),)+
                    other => Err(format!("unknown value {other:?}")),
                }
            }
        }
    };
}

from_str_enum!(ViewAggregation, "max" => ViewAggregation::Max, "sum" => ViewAggregation::Sum);
from_str_enum!(NormalizeAxis, "per_prompt" => NormalizeAxis::PerPrompt, "per_face" => NormalizeAxis::PerFace);

fn check_prompts(detections: &[Detection], prompts: usize) -> Result<(), ScoringError> {
    match detections.iter().find(|d| d.prompt_index >= prompts) {
        Some(d) => Err(ScoringError::PromptOutOfRange {
            prompt: d.prompt_index,
            count: prompts,
        }),
        None => Ok(()),
    }
}

/// Per-face maximum box confidence for every prompt, before area weighting.
fn max_confidence(
    render: &RenderOutput,
    mesh: &Mesh,
    detections: &[Detection],
    prompts: usize,
) -> (ScoreMatrix, Vec<Vec<usize>>) {
    let mut conf = ScoreMatrix::zeros(mesh.num_faces(), prompts);
    let mut targets = Vec::with_capacity(detections.len());
    for d in detections {
        let faces = render.faces_in_box(mesh, &d.bbox);
        for &f in &faces {
            let v = conf.get(f, d.prompt_index).max(d.score);
            conf.set(f, d.prompt_index, v);
        }
        targets.push(faces);
    }
    (conf, targets)
}

/// Topology-agnostic scores for one view: each face inside a box takes the
/// box confidence (max over boxes of the same prompt) times its pixel area.
pub fn baseline_view_scores(
    render: &RenderOutput,
    mesh: &Mesh,
    detections: &[Detection],
    prompts: usize,
) -> Result<ScoreMatrix, ScoringError> {
    check_prompts(detections, prompts)?;
    let (mut w, _) = max_confidence(render, mesh, detections, prompts);
    apply_area(&mut w, render);
    Ok(w)
}

fn apply_area(w: &mut ScoreMatrix, render: &RenderOutput) {
    let k = w.prompts;
    for (f, row) in w.values.chunks_mut(k.max(1)).enumerate().take(w.faces) {
        let s = render.face_pixel_area.get(f).copied().unwrap_or(0) as f64;
        for v in row {
            *v *= s;
        }
    }
}

/// Fraction of each face's q-ring that lies in `visible`, aligned with
/// `visible`. `mask` must be all false on entry and is restored on exit.
pub fn visibility_weights_masked(visible: &[usize], qring: &QRingIndex, mask: &mut [bool]) -> Vec<f64> {
    for &f in visible {
        mask[f] = true;
    }
    let out = visible
        .iter()
        .map(|&f| {
            let n = qring.neighbors(f);
            n.iter().filter(|&&g| mask[g as usize]).count() as f64 / n.len() as f64
        })
        .collect();
    for &f in visible {
        mask[f] = false;
    }
    out
}

pub fn visibility_weights(visible: &[usize], qring: &QRingIndex) -> Vec<f64> {
    let mut mask = vec![false; qring.num_faces()];
    visibility_weights_masked(visible, qring, &mut mask)
}

/// Everything the topology-aware scorer needs besides the view itself.
#[derive(Debug, Clone, Copy)]
pub struct SatrContext<'a> {
    pub mesh: &'a Mesh,
    /// Required unless reweighting is `None`.
    pub geodesics: Option<&'a Geodesics>,
    /// `None` disables visibility smoothing.
    pub qring: Option<&'a QRingIndex>,
    pub reweighting: Reweighting,
    pub capital: CapitalAverage,
    pub sigma_floor: f64,
}

/// Topology-aware scores for one view. Per prompt, the geodesic weights and
/// visibility ratios of all its boxes are summed separately and multiply
/// the baseline score. Faces outside a box get no geodesic or visibility
/// weight from it. With reweighting `None` and no q-ring this is exactly
/// the baseline.
pub fn satr_view_scores(
    render: &RenderOutput,
    detections: &[Detection],
    prompts: usize,
    ctx: &SatrContext<'_>,
) -> Result<ScoreMatrix, ScoringError> {
    check_prompts(detections, prompts)?;
    let n = ctx.mesh.num_faces();
    let (mut w, targets) = max_confidence(render, ctx.mesh, detections, prompts);
    apply_area(&mut w, render);

    let geo = ctx.reweighting != Reweighting::None;
    if geo && ctx.geodesics.is_none() {
        return Err(ScoringError::MissingGeodesics);
    }
    let mut geo_sum = if geo { ScoreMatrix::zeros(n, prompts) } else { ScoreMatrix::zeros(0, 0) };
    let mut vis_sum = if ctx.qring.is_some() { ScoreMatrix::zeros(n, prompts) } else { ScoreMatrix::zeros(0, 0) };
    let mut mask = vec![false; n];
    for (d, faces) in detections.iter().zip(&targets) {
        if faces.is_empty() {
            continue;
        }
        let k = d.prompt_index;
        if geo {
            let capital = capital_face(ctx.mesh, faces, &render.face_pixel_area, ctx.capital)?;
            let field = ctx.geodesics.expect("checked above").field(capital, faces)?;
            let r = ctx.reweighting.apply(&field, ctx.sigma_floor);
            for (&f, &x) in r.faces.iter().zip(&r.weights) {
                let v = geo_sum.get(f, k) + x;
                geo_sum.set(f, k, v);
            }
        }
        if let Some(q) = ctx.qring {
            let vis = visibility_weights_masked(faces, q, &mut mask);
            for (&f, &x) in faces.iter().zip(&vis) {
                let v = vis_sum.get(f, k) + x;
                vis_sum.set(f, k, v);
            }
        }
    }
    if geo {
        w.values.iter_mut().zip(&geo_sum.values).for_each(|(a, b)| *a *= b);
    }
    if ctx.qring.is_some() {
        w.values.iter_mut().zip(&vis_sum.values).for_each(|(a, b)| *a *= b);
    }
    Ok(w)
}

/// Running cross-view aggregate, so views can be folded in one at a time.
#[derive(Debug, Clone)]
pub struct ViewAccumulator {
    mode: ViewAggregation,
    total: ScoreMatrix,
    views: usize,
}

impl ViewAccumulator {
    pub fn new(faces: usize, prompts: usize, mode: ViewAggregation) -> Self {
        ViewAccumulator {
            mode,
            total: ScoreMatrix::zeros(faces, prompts),
            views: 0,
        }
    }

    pub fn add(&mut self, view: &ScoreMatrix) -> Result<(), ScoringError> {
        self.total.check_shape(view)?;
        for (a, &b) in self.total.values.iter_mut().zip(&view.values) {
            *a = match self.mode {
                ViewAggregation::Max => a.max(b),
                ViewAggregation::Sum => *a + b,
            };
        }
        self.views += 1;
        Ok(())
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn finish(self) -> ScoreMatrix {
        self.total
    }
}

pub fn aggregate_views(per_view: &[ScoreMatrix], mode: ViewAggregation) -> Result<ScoreMatrix, ScoringError> {
    let first = per_view.first().ok_or(ScoringError::NoViews)?;
    let mut acc = ViewAccumulator::new(first.faces, first.prompts, mode);
    for v in per_view {
        acc.add(v)?;
    }
    Ok(acc.finish())
}

/// Divides each prompt column (or each face row) by its maximum. All-zero
/// columns or rows stay zero.
pub fn normalize_scores(s: &ScoreMatrix, axis: NormalizeAxis) -> ScoreMatrix {
    let mut out = s.clone();
    match axis {
        NormalizeAxis::PerPrompt => {
            for k in 0..s.prompts {
                let max = s.column(k).fold(0.0, f64::max);
                if max > 0.0 {
                    for f in 0..s.faces {
                        out.set(f, k, s.get(f, k) / max);
                    }
                }
            }
        }
        NormalizeAxis::PerFace => {
            for f in 0..s.faces {
                let max = s.row(f).iter().copied().fold(0.0, f64::max);
                if max > 0.0 {
                    for k in 0..s.prompts {
                        out.set(f, k, s.get(f, k) / max);
                    }
                }
            }
        }
    }
    out
}

/// Argmax over prompts per face with ties to the lowest prompt index.
pub fn assign_labels(s: &ScoreMatrix, policy: LabelPolicy) -> Vec<i32> {
    (0..s.faces)
        .map(|f| {
            let row = s.row(f);
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            match policy {
                LabelPolicy::ArgmaxWithBackground(tau) if row.get(best).is_none_or(|&v| v < tau) => -1,
                _ if row.is_empty() => -1,
                _ => best as i32,
            }
        })
        .collect()
}
