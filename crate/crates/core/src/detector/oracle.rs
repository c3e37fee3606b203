//! Ground-truth detector: the tight pixel box of each labeled part instance,
//! optionally degraded by a seeded noise model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{check_prompt, sanitize, DetectRequest, Detection, Detector, DetectorError};
use crate::mesh::Mesh;
use crate::render::{BoundingBox, RenderOutput, BACKGROUND};

/// Area of a spurious box as a fraction of the frame.
pub const SPURIOUS_AREA_RANGE: (f64, f64) = (0.01, 0.25);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Maximum edge displacement as a fraction of the box width or height.
    pub jitter_frac: f64,
    pub drop_prob: f64,
    /// Expected number of false boxes per query.
    pub spurious_rate: f64,
    pub score_range: (f64, f64),
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            jitter_frac: 0.0,
            drop_prob: 0.0,
            spurious_rate: 0.0,
            score_range: (0.5, 1.0),
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_noiseless(&self) -> bool {
        self.jitter_frac == 0.0 && self.drop_prob == 0.0 && self.spurious_rate == 0.0
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let (lo, hi) = self.score_range;
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(DetectorError::InvalidNoise("drop_prob must lie in [0, 1]"));
        }
        if !(self.jitter_frac >= 0.0 && self.jitter_frac.is_finite()) {
            return Err(DetectorError::InvalidNoise("jitter_frac must be finite and nonnegative"));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(DetectorError::InvalidNoise("spurious_rate must be finite and nonnegative"));
        }
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(DetectorError::InvalidNoise("score_range must satisfy 0 <= lo <= hi <= 1"));
        }
        Ok(())
    }

    fn rng_for(&self, view: usize, prompt: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((view as u64) << 32) ^ prompt as u64);
        rng
    }

    fn score(&self, rng: &mut ChaCha8Rng) -> f64 {
        let (lo, hi) = self.score_range;
        if self.is_noiseless() || lo == hi {
            hi
        } else {
            rng.random_range(lo..=hi)
        }
    }

    /// Applies drop and edge jitter to each clean box in turn, then adds
    /// spurious boxes.
    fn apply(
        &self,
        truth: &[BoundingBox],
        view: usize,
        prompt: usize,
        width: usize,
        height: usize,
    ) -> Vec<(BoundingBox, f64)> {
        let mut rng = self.rng_for(view, prompt);
        let mut out = Vec::new();
        for &b in truth {
            let dropped = self.drop_prob > 0.0 && rng.random::<f64>() < self.drop_prob;
            if !dropped {
                let b = if self.jitter_frac > 0.0 {
                    let jx = self.jitter_frac * b.w;
                    let jy = self.jitter_frac * b.h;
                    let mut e = [0.0; 4];
                    for (k, v) in e.iter_mut().enumerate() {
                        let j = if k % 2 == 0 { jx } else { jy };
                        *v = rng.random_range(-j..=j);
                    }
                    BoundingBox::from_corners(b.x + e[0], b.y + e[1], b.x + b.w + e[2], b.y + b.h + e[3])
                } else {
                    b
                };
                out.push((b, self.score(&mut rng)));
            }
        }
        if self.spurious_rate > 0.0 {
            let count = Poisson::new(self.spurious_rate).map_or(0.0, |p| p.sample(&mut rng)) as usize;
            let (w, h) = (width as f64, height as f64);
            for _ in 0..count {
                let area = rng.random_range(SPURIOUS_AREA_RANGE.0..=SPURIOUS_AREA_RANGE.1) * w * h;
                let aspect = rng.random_range(0.5f64.ln()..=2f64.ln()).exp();
                let bw = (area * aspect).sqrt().min(w);
                let bh = (area / bw).min(h);
                let x = rng.random_range(0.0..=(w - bw));
                let y = rng.random_range(0.0..=(h - bh));
                out.push((BoundingBox::new(x, y, bw, bh), self.score(&mut rng)));
            }
        }
        out
    }
}

/// Connected pieces of each labeled part: faces with the same label that
/// share a vertex end up in the same instance. Instances are numbered in
/// order of their lowest face.
pub fn part_instances(mesh: &Mesh, face_labels: &[i32]) -> Vec<u32> {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let n = mesh.num_faces();
    let mut parent: Vec<usize> = (0..n).collect();
    for faces in mesh.vertex_faces() {
        for (i, &f) in faces.iter().enumerate() {
            if let Some(&g) = faces[..i].iter().find(|&&g| face_labels[g] == face_labels[f]) {
                let (a, b) = (find(&mut parent, f), find(&mut parent, g));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut ids = vec![u32::MAX; n];
    let mut next = 0;
    for f in 0..n {
        let root = find(&mut parent, f);
        if ids[root] == u32::MAX {
            ids[root] = next;
            next += 1;
        }
        ids[f] = ids[root];
    }
    ids
}

#[derive(Clone, Copy)]
struct PixelBounds {
    c0: usize,
    c1: usize,
    r0: usize,
    r1: usize,
}

impl PixelBounds {
    fn grow(b: Option<PixelBounds>, col: usize, row: usize) -> PixelBounds {
        match b {
            None => PixelBounds {
                c0: col,
                c1: col,
                r0: row,
                r1: row,
            },
            Some(b) => PixelBounds {
                c0: b.c0.min(col),
                c1: b.c1.max(col),
                r0: b.r0.min(row),
                r1: b.r1.max(row),
            },
        }
    }

    // rows count from the top; y grows upward
    fn to_box(self, height: usize) -> BoundingBox {
        BoundingBox::from_corners(
            self.c0 as f64,
            (height - 1 - self.r1) as f64,
            (self.c1 + 1) as f64,
            (height - self.r0) as f64,
        )
    }
}

/// Tight pixel box of each visible instance of `class`, ordered by
/// instance id. `instances` of `None` treats the class as one instance.
pub fn tight_instance_boxes(
    render: &RenderOutput,
    face_labels: &[i32],
    instances: Option<&[u32]>,
    class: i32,
) -> Vec<BoundingBox> {
    let mut bounds: std::collections::BTreeMap<u32, PixelBounds> = Default::default();
    for row in 0..render.height {
        for col in 0..render.width {
            let f = render.pixel2face[row * render.width + col];
            if f == BACKGROUND || face_labels.get(f as usize) != Some(&class) {
                continue;
            }
            let id = instances.map_or(0, |ids| ids[f as usize]);
            let b = PixelBounds::grow(bounds.get(&id).copied(), col, row);
            bounds.insert(id, b);
        }
    }
    bounds.into_values().map(|b| b.to_box(render.height)).collect()
}

/// Tight pixel box around every pixel whose face carries `class`.
pub fn tight_part_box(render: &RenderOutput, face_labels: &[i32], class: i32) -> Option<BoundingBox> {
    tight_instance_boxes(render, face_labels, None, class).pop()
}

/// Detector that reads ground-truth face labels through the face-ID buffer.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    face_labels: Vec<i32>,
    instances: Option<Vec<u32>>,
    class_of_prompt: Vec<i32>,
    noise: NoiseModel,
}

impl OracleDetector {
    /// `class_of_prompt[k]` is the ground-truth class searched for prompt k.
    pub fn new(face_labels: Vec<i32>, class_of_prompt: Vec<i32>, noise: NoiseModel) -> Result<Self, DetectorError> {
        noise.validate()?;
        Ok(OracleDetector {
            face_labels,
            instances: None,
            class_of_prompt,
            noise,
        })
    }

    /// One box per connected instance of a part instead of one per class.
    pub fn for_mesh(
        mesh: &Mesh,
        face_labels: Vec<i32>,
        class_of_prompt: Vec<i32>,
        noise: NoiseModel,
    ) -> Result<Self, DetectorError> {
        if face_labels.len() != mesh.num_faces() {
            return Err(DetectorError::LabelCount {
                labels: face_labels.len(),
                faces: mesh.num_faces(),
            });
        }
        let instances = part_instances(mesh, &face_labels);
        Ok(OracleDetector {
            instances: Some(instances),
            ..Self::new(face_labels, class_of_prompt, noise)?
        })
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
}

impl Detector for OracleDetector {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<Vec<Detection>, DetectorError> {
        check_prompt(request)?;
        let class = *self
            .class_of_prompt
            .get(request.prompt_index)
            .ok_or(DetectorError::UnmappedPrompt(request.prompt_index))?;
        let r = request.render;
        let truth = tight_instance_boxes(r, &self.face_labels, self.instances.as_deref(), class);
        let boxes = self
            .noise
            .apply(&truth, request.view_index, request.prompt_index, r.width, r.height);
        let detections = boxes
            .into_iter()
            .map(|(bbox, score)| Detection {
                bbox,
                score,
                prompt_index: request.prompt_index,
                view_index: request.view_index,
            })
            .collect();
        Ok(sanitize(detections, r.width, r.height))
    }
}
