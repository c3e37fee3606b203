//! Geodesic distance fields between faces, capital-face estimation, and the
//! distance-to-weight reweighting schemes.

mod heat;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{add, dist, dot, scale, sub, Mesh, Vec3};

pub use heat::HeatSolver;

/// Epsilon in the max-geodesic weight `1 - d / (d_max + eps)`.
pub const MAX_GEODESIC_EPS: f64 = 1e-8;
/// Gaussian sigma floor, relative to the mesh diameter.
pub const SIGMA_FLOOR_FRACTION: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeodesicError {
    #[error("target face set is empty")]
    EmptyTarget,
    #[error("face {face} out of range for a mesh with {count} faces")]
    FaceOutOfRange { face: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeodesicBackend {
    #[default]
    Graph,
    Heat,
}

impl std::str::FromStr for GeodesicBackend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "graph" => Ok(GeodesicBackend::Graph),
            "heat" => Ok(GeodesicBackend::Heat),
            other => Err(format!("unknown geodesic backend {other:?}")),
        }
    }
}

/// Distances from a source face to a set of target faces. Unreachable
/// targets hold `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicField {
    pub source: usize,
    pub faces: Vec<usize>,
    pub distances: Vec<f64>,
}

impl GeodesicField {
    pub fn get(&self, face: usize) -> Option<f64> {
        self.faces.iter().position(|&f| f == face).map(|i| self.distances[i])
    }
}

/// Per-face weights aligned with the target faces of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightVector {
    pub faces: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reweighting {
    None,
    #[default]
    Gaussian,
    Max,
    Softmax,
}

impl std::str::FromStr for Reweighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Reweighting::None),
            "gaussian" => Ok(Reweighting::Gaussian),
            "max" => Ok(Reweighting::Max),
            "softmax" => Ok(Reweighting::Softmax),
            other => Err(format!("unknown reweighting {other:?}")),
        }
    }
}

impl Reweighting {
    /// Weights for the field's targets; `None` yields all ones.
    pub fn apply(self, field: &GeodesicField, sigma_floor: f64) -> ReweightVector {
        match self {
            Reweighting::None => ReweightVector {
                faces: field.faces.clone(),
                weights: field
                    .distances
                    .iter()
                    .map(|d| if d.is_finite() { 1.0 } else { 0.0 })
                    .collect(),
            },
            Reweighting::Gaussian => gaussian_reweight(field, sigma_floor),
            Reweighting::Max => max_geodesic_reweight(field),
            Reweighting::Softmax => softmax_geodesic_reweight(field),
        }
    }
}

/// Normal density of each distance under a Gaussian fitted (population
/// mean and standard deviation) to the finite distances. Sigma is floored
/// at `sigma_floor`. Unreachable faces get weight 0.
pub fn gaussian_reweight(field: &GeodesicField, sigma_floor: f64) -> ReweightVector {
    let finite: Vec<f64> = field.distances.iter().copied().filter(|d| d.is_finite()).collect();
    let weights = if finite.is_empty() {
        vec![0.0; field.distances.len()]
    } else {
        let n = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / n;
        let var = finite.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt().max(sigma_floor);
        let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        field
            .distances
            .iter()
            .map(|&d| {
                if d.is_finite() {
                    norm * (-(d - mean).powi(2) / (2.0 * sigma * sigma)).exp()
                } else {
                    0.0
                }
            })
            .collect()
    };
    ReweightVector {
        faces: field.faces.clone(),
        weights,
    }
}

/// `1 - d / (d_max + eps)` over the finite distances.
pub fn max_geodesic_reweight(field: &GeodesicField) -> ReweightVector {
    let max = field
        .distances
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    ReweightVector {
        faces: field.faces.clone(),
        weights: field
            .distances
            .iter()
            .map(|&d| if d.is_finite() { 1.0 - d / (max + MAX_GEODESIC_EPS) } else { 0.0 })
            .collect(),
    }
}

/// Softmax of negated distances over the finite targets.
pub fn softmax_geodesic_reweight(field: &GeodesicField) -> ReweightVector {
    let min = field
        .distances
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = field
        .distances
        .iter()
        .map(|&d| if d.is_finite() { (min - d).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    ReweightVector {
        faces: field.faces.clone(),
        weights: exps
            .iter()
            .map(|&e| if total > 0.0 { e / total } else { 0.0 })
            .collect(),
    }
}

/// How the anchor point for the capital face is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapitalAverage {
    /// Pixel-area-weighted mean of target face centroids.
    #[default]
    AreaWeightedCentroids,
    /// Unweighted mean of the distinct vertices of the target faces.
    UniqueVertices,
}

/// Picks the target face closest (exact point-to-triangle distance) to the
/// averaged anchor point. `areas` is indexed by face id. Ties go to the
/// lowest face id.
pub fn capital_face(
    mesh: &Mesh,
    target: &[usize],
    areas: &[u32],
    average: CapitalAverage,
) -> Result<usize, GeodesicError> {
    if target.is_empty() {
        return Err(GeodesicError::EmptyTarget);
    }
    check_faces(mesh, target)?;
    let anchor = match average {
        CapitalAverage::AreaWeightedCentroids => {
            let mut acc = [0.0; 3];
            let mut total = 0.0;
            for &f in target {
                let a = areas.get(f).copied().unwrap_or(0) as f64;
                acc = add(acc, scale(mesh.centroid(f), a));
                total += a;
            }
            if total > 0.0 {
                scale(acc, 1.0 / total)
            } else {
                let sum = target.iter().fold([0.0; 3], |s, &f| add(s, mesh.centroid(f)));
                scale(sum, 1.0 / target.len() as f64)
            }
        }
        CapitalAverage::UniqueVertices => {
            let mut verts: Vec<usize> = target.iter().flat_map(|&f| mesh.faces[f]).collect();
            verts.sort_unstable();
            verts.dedup();
            let sum = verts.iter().fold([0.0; 3], |s, &v| add(s, mesh.vertices[v]));
            scale(sum, 1.0 / verts.len() as f64)
        }
    };
    let mut best = (f64::INFINITY, usize::MAX);
    for &f in target {
        let [a, b, c] = mesh.face_vertices(f);
        let d = dist(anchor, closest_point_on_triangle(anchor, a, b, c));
        if d < best.0 || (d == best.0 && f < best.1) {
            best = (d, f);
        }
    }
    Ok(best.1)
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return add(a, scale(ab, v));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return add(a, scale(ac, w));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return add(b, scale(sub(c, b), w));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    add(a, add(scale(ab, v), scale(ac, w)))
}

fn check_faces(mesh: &Mesh, faces: &[usize]) -> Result<(), GeodesicError> {
    let count = mesh.num_faces();
    match faces.iter().find(|&&f| f >= count) {
        Some(&face) => Err(GeodesicError::FaceOutOfRange { face, count }),
        None => Ok(()),
    }
}

/// Face graph whose nodes are faces and whose edges join faces sharing a
/// vertex, weighted by centroid-to-centroid length.
#[derive(Debug, Clone)]
pub struct DualGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

#[derive(Copy, Clone, PartialEq)]
struct Entry {
    dist: f64,
    face: u32,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.face.cmp(&self.face))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl DualGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let centroids = mesh.centroids();
        let adjacency = mesh.face_adjacency();
        let mut offsets = Vec::with_capacity(adjacency.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        for (f, adj) in adjacency.iter().enumerate() {
            for &g in adj {
                neighbors.push(g as u32);
                weights.push(dist(centroids[f], centroids[g]));
            }
            offsets.push(neighbors.len());
        }
        DualGraph {
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn num_faces(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edges(&self, face: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[face]..self.offsets[face + 1];
        self.neighbors[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&g, &w)| (g as usize, w))
    }

    /// Dijkstra from `source`. Stops once every face flagged in `stop_after`
    /// is settled; pass `None` to settle the whole component.
    pub fn shortest_paths(&self, source: usize, stop_after: Option<&[usize]>) -> Vec<f64> {
        let n = self.num_faces();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut pending = match stop_after {
            Some(t) => {
                let mut want = vec![false; n];
                let mut count = 0;
                for &f in t {
                    if !want[f] {
                        want[f] = true;
                        count += 1;
                    }
                }
                Some((want, count))
            }
            None => None,
        };
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            dist: 0.0,
            face: source as u32,
        });
        while let Some(Entry { dist: d, face }) = heap.pop() {
            let f = face as usize;
            if done[f] {
                continue;
            }
            done[f] = true;
            if let Some((want, count)) = pending.as_mut() {
                if want[f] {
                    *count -= 1;
                    if *count == 0 {
                        break;
                    }
                }
            }
            for (g, w) in self.edges(f) {
                let nd = d + w;
                if nd < dist[g] {
                    dist[g] = nd;
                    heap.push(Entry {
                        dist: nd,
                        face: g as u32,
                    });
                }
            }
        }
        dist
    }
}

/// Precomputed distance backend for one mesh.
#[derive(Debug, Clone)]
pub enum Geodesics {
    Graph(DualGraph),
    Heat(Box<HeatSolver>),
}

impl Geodesics {
    pub fn new(mesh: &Mesh, backend: GeodesicBackend) -> Self {
        match backend {
            GeodesicBackend::Graph => Geodesics::Graph(DualGraph::new(mesh)),
            GeodesicBackend::Heat => Geodesics::Heat(Box::new(HeatSolver::new(mesh))),
        }
    }

    pub fn num_faces(&self) -> usize {
        match self {
            Geodesics::Graph(g) => g.num_faces(),
            Geodesics::Heat(h) => h.num_faces(),
        }
    }

    pub fn field(&self, source: usize, targets: &[usize]) -> Result<GeodesicField, GeodesicError> {
        let count = self.num_faces();
        if targets.is_empty() {
            return Err(GeodesicError::EmptyTarget);
        }
        if let Some(&face) = std::iter::once(&source).chain(targets).find(|&&f| f >= count) {
            return Err(GeodesicError::FaceOutOfRange { face, count });
        }
        let all = match self {
            Geodesics::Graph(g) => g.shortest_paths(source, Some(targets)),
            Geodesics::Heat(h) => h.face_distances(source),
        };
        Ok(GeodesicField {
            source,
            faces: targets.to_vec(),
            distances: targets.iter().map(|&f| all[f]).collect(),
        })
    }
}

/// One-shot convenience wrapper around [`Geodesics`].
pub fn geodesic_distances(
    mesh: &Mesh,
    source: usize,
    targets: &[usize],
    backend: GeodesicBackend,
) -> Result<GeodesicField, GeodesicError> {
    check_faces(mesh, &[source])?;
    Geodesics::new(mesh, backend).field(source, targets)
}

#[cfg(test)]
mod tests;
