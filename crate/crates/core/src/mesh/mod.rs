//! Indexed triangle meshes: construction, normalization, face adjacency,
//! q-ring neighborhoods, file I/O and label transfer.

mod io;
mod qring;
mod transfer;

pub use io::{load_mesh, save_mesh, MeshFormat, PlyEncoding};
pub use qring::{build_q_ring, QRingIndex};
pub use transfer::{transfer_labels, vote_face_label, NearestVertex};

use thiserror::Error;

pub type Vec3 = [f64; 3];

/// Label value used for faces or vertices without a class.
pub const UNLABELED: i32 = -1;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-finite coordinate in vertex {vertex}")]
    NonFinite { vertex: usize },
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("{what} has length {got}, expected {expected}")]
    LabelLength {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("mesh is degenerate: {0}")]
    Degenerate(&'static str),
    #[error("source mesh has no vertex labels")]
    MissingLabels,
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub face_labels: Option<Vec<i32>>,
    pub vertex_labels: Option<Vec<i32>>,
}

impl Mesh {
    /// Builds a mesh after checking finiteness and index ranges.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mesh = Mesh {
            vertices,
            faces,
            face_labels: None,
            vertex_labels: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn with_face_labels(mut self, labels: Vec<i32>) -> Result<Self, MeshError> {
        if labels.len() != self.faces.len() {
            return Err(MeshError::LabelLength {
                what: "face labels",
                got: labels.len(),
                expected: self.faces.len(),
            });
        }
        self.face_labels = Some(labels);
        Ok(self)
    }

    pub fn with_vertex_labels(mut self, labels: Vec<i32>) -> Result<Self, MeshError> {
        if labels.len() != self.vertices.len() {
            return Err(MeshError::LabelLength {
                what: "vertex labels",
                got: labels.len(),
                expected: self.vertices.len(),
            });
        }
        self.vertex_labels = Some(labels);
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite { vertex: i });
            }
        }
        let count = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &index in f {
                if index >= count {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index,
                        count,
                    });
                }
            }
        }
        if let Some(l) = &self.face_labels {
            if l.len() != self.faces.len() {
                return Err(MeshError::LabelLength {
                    what: "face labels",
                    got: l.len(),
                    expected: self.faces.len(),
                });
            }
        }
        if let Some(l) = &self.vertex_labels {
            if l.len() != count {
                return Err(MeshError::LabelLength {
                    what: "vertex labels",
                    got: l.len(),
                    expected: count,
                });
            }
        }
        Ok(())
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_vertices(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn centroid(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.face_vertices(face);
        scale(add(add(a, b), c), 1.0 / 3.0)
    }

    pub fn centroids(&self) -> Vec<Vec3> {
        (0..self.faces.len()).map(|f| self.centroid(f)).collect()
    }

    /// Unit normal of a face, or zero for degenerate triangles.
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.face_vertices(face);
        normalize_or_zero(cross(sub(b, a), sub(c, a)))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.face_vertices(face);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// Axis-aligned bounding box as (min, max). Panics on an empty mesh.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let (lo, hi) = self.bounding_box();
        norm(sub(hi, lo))
    }

    /// For every vertex, the faces that reference it (ascending).
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if out[v].last() != Some(&fi) {
                    out[v].push(fi);
                }
            }
        }
        out
    }

    /// Faces sharing at least one vertex with each face, excluding the face
    /// itself. Lists are sorted and deduplicated.
    pub fn face_adjacency(&self) -> Vec<Vec<usize>> {
        let vf = self.vertex_faces();
        self.faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let mut n: Vec<usize> = f
                    .iter()
                    .flat_map(|&v| vf[v].iter().copied())
                    .filter(|&g| g != fi)
                    .collect();
                n.sort_unstable();
                n.dedup();
                n
            })
            .collect()
    }

    /// Applies a translation then a uniform scale to every vertex.
    pub fn transformed(&self, translate: Vec3, scale_by: f64) -> Mesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = scale(add(*v, translate), scale_by);
        }
        out
    }

    /// Concatenates meshes, offsetting indices. Labels are kept only when
    /// every input carries them.
    pub fn merge(parts: &[Mesh]) -> Mesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let all_face_labels = parts.iter().all(|p| p.face_labels.is_some());
        let all_vertex_labels = parts.iter().all(|p| p.vertex_labels.is_some());
        let mut face_labels = Vec::new();
        let mut vertex_labels = Vec::new();
        for p in parts {
            let offset = vertices.len();
            vertices.extend_from_slice(&p.vertices);
            faces.extend(p.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
            if let (true, Some(l)) = (all_face_labels, &p.face_labels) {
                face_labels.extend_from_slice(l);
            }
            if let (true, Some(l)) = (all_vertex_labels, &p.vertex_labels) {
                vertex_labels.extend_from_slice(l);
            }
        }
        Mesh {
            vertices,
            faces,
            face_labels: all_face_labels.then_some(face_labels),
            vertex_labels: all_vertex_labels.then_some(vertex_labels),
        }
    }
}

/// Centers the mesh on its bounding-box center and scales it uniformly so
/// the farthest vertex lies on the unit sphere.
pub fn normalize_mesh(mesh: &Mesh) -> Result<Mesh, MeshError> {
    if mesh.vertices.is_empty() {
        return Err(MeshError::Degenerate("mesh has no vertices"));
    }
    let (lo, hi) = mesh.bounding_box();
    let center = scale(add(lo, hi), 0.5);
    let radius = mesh
        .vertices
        .iter()
        .map(|v| norm(sub(*v, center)))
        .fold(0.0, f64::max);
    if !(radius > 0.0) {
        return Err(MeshError::Degenerate("all vertices coincide"));
    }
    Ok(mesh.transformed(scale(center, -1.0), 1.0 / radius))
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

pub fn normalize_or_zero(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        [0.0; 3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube() -> Mesh {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push([
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            ]);
        }
        let f = vec![
            [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
            [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
            [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
        ];
        Mesh::new(v, f).unwrap()
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 8]]).unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 8, .. }));
    }

    #[test]
    fn rejects_non_finite() {
        let err = Mesh::new(vec![[0.0, f64::NAN, 0.0]], vec![]).unwrap_err();
        assert!(matches!(err, MeshError::NonFinite { vertex: 0 }));
    }

    #[test]
    fn cube_normalizes_by_sqrt3() {
        let m = normalize_mesh(&cube()).unwrap();
        let s = 1.0 / 3f64.sqrt();
        for (a, b) in m.vertices.iter().zip(cube().vertices.iter()) {
            for k in 0..3 {
                assert!((a[k] - b[k] * s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn triangle_normalization() {
        let m = Mesh::new(
            vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let n = normalize_mesh(&m).unwrap();
        let norms: Vec<f64> = n.vertices.iter().map(|v| norm(*v)).collect();
        let max = norms.iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        // every vertex is sqrt(2) from the bbox center (1,1,0)
        assert_eq!(norms.iter().filter(|&&x| (x - 1.0).abs() < 1e-12).count(), 3);
        let (lo, hi) = n.bounding_box();
        for k in 0..3 {
            assert!((lo[k] + hi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_is_idempotent() {
        let once = normalize_mesh(&cube().transformed([3.0, -1.0, 0.5], 7.0)).unwrap();
        let twice = normalize_mesh(&once).unwrap();
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            assert!(dist(*a, *b) < 1e-6);
        }
    }

    #[test]
    fn degenerate_normalization_fails() {
        let m = Mesh::new(vec![[1.0, 1.0, 1.0]; 3], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(normalize_mesh(&m), Err(MeshError::Degenerate(_))));
    }

    #[test]
    fn labels_survive_normalization() {
        let m = cube().with_face_labels((0..12).collect()).unwrap();
        let n = normalize_mesh(&m).unwrap();
        assert_eq!(n.face_labels, m.face_labels);
    }
}
