use std::collections::BTreeMap;

use super::{Mesh, MeshError, Vec3, UNLABELED};

/// Static 3-d tree over a point set for exact nearest-neighbor queries.
pub struct NearestVertex<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
}

impl<'a> NearestVertex<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        NearestVertex { points, order }
    }

    /// Index of the nearest point; ties resolve to the lowest index.
    pub fn nearest(&self, query: Vec3) -> Option<usize> {
        if self.order.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(&self.order, 0, query, &mut best);
        Some(best.1)
    }

    fn search(&self, slice: &[usize], depth: usize, q: Vec3, best: &mut (f64, usize)) {
        if slice.is_empty() {
            return;
        }
        let mid = slice.len() / 2;
        let idx = slice[mid];
        let p = self.points[idx];
        let d2 = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
        if d2 < best.0 || (d2 == best.0 && idx < best.1) {
            *best = (d2, idx);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (&slice[..mid], &slice[mid + 1..])
        } else {
            (&slice[mid + 1..], &slice[..mid])
        };
        self.search(near, depth + 1, q, best);
        if diff * diff <= best.0 {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn build(points: &[Vec3], slice: &mut [usize], depth: usize) {
    if slice.len() <= 1 {
        return;
    }
    let axis = depth % 3;
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let (lo, hi) = slice.split_at_mut(mid);
    build(points, lo, depth + 1);
    build(points, &mut hi[1..], depth + 1);
}

/// Majority vote over a face's three vertex labels. Ties go to the lowest
/// class index; the unlabeled value only wins as a strict majority.
pub fn vote_face_label(labels: [i32; 3]) -> i32 {
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let winners: Vec<i32> = counts
        .iter()
        .filter(|(_, &c)| c == best)
        .map(|(&l, _)| l)
        .collect();
    winners
        .iter()
        .copied()
        .find(|&l| l != UNLABELED)
        .unwrap_or(UNLABELED)
}

/// Copies vertex labels from `src` onto `dst` by nearest vertex, then
/// derives face labels by vote.
pub fn transfer_labels(src: &Mesh, dst: &Mesh) -> Result<Mesh, MeshError> {
    let src_labels = src.vertex_labels.as_ref().ok_or(MeshError::MissingLabels)?;
    let tree = NearestVertex::new(&src.vertices);
    let vertex_labels: Vec<i32> = dst
        .vertices
        .iter()
        .map(|&v| tree.nearest(v).map_or(UNLABELED, |i| src_labels[i]))
        .collect();
    let face_labels = dst
        .faces
        .iter()
        .map(|f| vote_face_label([vertex_labels[f[0]], vertex_labels[f[1]], vertex_labels[f[2]]]))
        .collect();
    let mut out = dst.clone();
    out.vertex_labels = Some(vertex_labels);
    out.face_labels = Some(face_labels);
    Ok(out)
}
