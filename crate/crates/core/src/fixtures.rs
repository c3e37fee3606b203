//! Synthetic labeled meshes used as desk-scale benchmark shapes.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::mesh::{add, cross, dot, norm, normalize_or_zero, scale, sub, Mesh, Vec3};

/// A labeled mesh plus the part name for each class index.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub mesh: Mesh,
    pub parts: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    Snowman,
    Dumbbell,
    Humanoid,
    Grid,
    Icosphere,
}

impl std::str::FromStr for FixtureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "snowman" => FixtureKind::Snowman,
            "dumbbell" => FixtureKind::Dumbbell,
            "humanoid" => FixtureKind::Humanoid,
            "grid" => FixtureKind::Grid,
            "icosphere" => FixtureKind::Icosphere,
            other => return Err(format!("unknown fixture kind {other:?}")),
        })
    }
}

fn labeled(mesh: Mesh, label: i32) -> Mesh {
    let n = mesh.num_faces();
    Mesh {
        face_labels: Some(vec![label; n]),
        ..mesh
    }
}

/// Subdivided icosahedron projected onto a sphere. `subdivisions = 4` gives
/// 5120 faces.
pub fn icosphere(subdivisions: usize, radius: f64, center: Vec3) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&v| normalize_or_zero(v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(normalize_or_zero(add(verts[a], verts[b])));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts
        .into_iter()
        .map(|v| add(scale(v, radius), center))
        .collect();
    Mesh {
        vertices,
        faces,
        face_labels: None,
        vertex_labels: None,
    }
}

/// Planar `nx` x `ny` grid of unit cells in the z = 0 plane, two triangles
/// per cell (faces `2 * (j * nx + i)` and `+ 1` for cell (i, j)). Cell
/// diagonals alternate in a checkerboard so no direction is favored.
pub fn grid(nx: usize, ny: usize) -> Mesh {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 - nx as f64 / 2.0, j as f64 - ny as f64 / 2.0, 0.0]);
        }
    }
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = j * (nx + 1) + i;
            let b = a + 1;
            let c = a + nx + 1;
            let d = c + 1;
            if (i + j) % 2 == 1 {
                faces.push([a, b, c]);
                faces.push([b, d, c]);
            } else {
                faces.push([a, b, d]);
                faces.push([a, d, c]);
            }
        }
    }
    Mesh {
        vertices,
        faces,
        face_labels: None,
        vertex_labels: None,
    }
}

/// Latitude-longitude surface of revolution around the local +y axis.
/// Each ring is (polar angle from +y, extra y offset). `caps` closes the
/// first and/or last ring with a pole vertex. Returns the mesh and the
/// vertex indices of the first and last rings.
fn revolve(radius: f64, rings: &[(f64, f64)], segments: usize, caps: (bool, bool)) -> (Mesh, Vec<usize>, Vec<usize>) {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut ring_ids: Vec<Vec<usize>> = Vec::new();
    for &(theta, shift) in rings {
        let mut ids = Vec::with_capacity(segments);
        for j in 0..segments {
            let phi = 2.0 * PI * j as f64 / segments as f64;
            vertices.push([
                radius * theta.sin() * phi.cos(),
                radius * theta.cos() + shift,
                radius * theta.sin() * phi.sin(),
            ]);
            ids.push(vertices.len() - 1);
        }
        ring_ids.push(ids);
    }
    for w in ring_ids.windows(2) {
        for j in 0..segments {
            let k = (j + 1) % segments;
            faces.push([w[0][j], w[1][j], w[1][k]]);
            faces.push([w[0][j], w[1][k], w[0][k]]);
        }
    }
    let cap = |ring: &Vec<usize>, pole: Vec3, faces: &mut Vec<[usize; 3]>, vertices: &mut Vec<Vec3>| {
        vertices.push(pole);
        let p = vertices.len() - 1;
        for j in 0..segments {
            faces.push([p, ring[(j + 1) % segments], ring[j]]);
        }
    };
    let first = rings[0];
    let last = rings[rings.len() - 1];
    let first_ring = ring_ids[0].clone();
    let last_ring = ring_ids[ring_ids.len() - 1].clone();
    if caps.0 {
        cap(&ring_ids[0], [0.0, radius + first.1, 0.0], &mut faces, &mut vertices);
    }
    if caps.1 {
        cap(&ring_ids[ring_ids.len() - 1], [0.0, -radius + last.1, 0.0], &mut faces, &mut vertices);
    }
    let mesh = Mesh {
        vertices,
        faces,
        face_labels: None,
        vertex_labels: None,
    };
    (
        mesh,
        first_ring,
        last_ring,
    )
}

/// Sphere with a circular hole of radius `hole` around its -y pole.
/// Returns the mesh and the hole boundary ring (segment order).
fn sphere_with_south_hole(radius: f64, center: Vec3, hole: f64, rings: usize, segments: usize) -> (Mesh, Vec<usize>) {
    let hole_theta = PI - (hole / radius).asin();
    let profile: Vec<(f64, f64)> = (1..=rings)
        .map(|i| (hole_theta * i as f64 / rings as f64, 0.0))
        .collect();
    let (mut mesh, _, boundary) = revolve(radius, &profile, segments, (true, false));
    for v in &mut mesh.vertices {
        *v = add(*v, center);
    }
    (mesh, boundary)
}

/// Closed capsule from `start` to `end` with the given radius.
pub fn capsule(start: Vec3, end: Vec3, radius: f64, segments: usize) -> Mesh {
    let axis = sub(end, start);
    let length = norm(axis);
    let cap_rings = segments / 4;
    let mut profile = Vec::new();
    for i in 1..=cap_rings {
        profile.push((0.5 * PI * i as f64 / cap_rings as f64, length));
    }
    // body rings spaced like the segments around the axis
    let arc = 2.0 * PI * radius / segments as f64;
    let body_rings = (length / arc).ceil().max(1.0) as usize;
    for j in 1..body_rings {
        profile.push((0.5 * PI, length * (1.0 - j as f64 / body_rings as f64)));
    }
    for i in 0..cap_rings {
        profile.push((0.5 * PI + 0.5 * PI * i as f64 / cap_rings as f64, 0.0));
    }
    let (mut mesh, _, _) = revolve(radius, &profile, segments, (true, true));
    let rot = rotation_from_y(normalize_or_zero(axis));
    for v in &mut mesh.vertices {
        *v = add(apply(rot, *v), start);
    }
    mesh
}

type Mat3 = [Vec3; 3];

fn apply(m: Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// Rotation taking +y onto `dir` (unit).
fn rotation_from_y(dir: Vec3) -> Mat3 {
    let y = [0.0, 1.0, 0.0];
    let c = dot(y, dir);
    if c > 1.0 - 1e-12 {
        return [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    }
    if c < -1.0 + 1e-12 {
        return [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    }
    let v = cross(y, dir);
    let k = 1.0 / (1.0 + c);
    [
        [v[0] * v[0] * k + c, v[0] * v[1] * k - v[2], v[0] * v[2] * k + v[1]],
        [v[1] * v[0] * k + v[2], v[1] * v[1] * k + c, v[1] * v[2] * k - v[0]],
        [v[2] * v[0] * k - v[1], v[2] * v[1] * k + v[0], v[2] * v[2] * k + c],
    ]
}

pub fn snowman() -> Fixture {
    let head = labeled(icosphere(3, 0.6, [0.0, 1.45, 0.0]), 0);
    let body = labeled(icosphere(3, 1.0, [0.0, 0.0, 0.0]), 1);
    Fixture {
        mesh: Mesh::merge(&[head, body]),
        parts: vec!["head".into(), "body".into()],
    }
}

/// Geometry of the dumbbell fixture: two spheres side by side, joined by a
/// thin tube that loops below them. The spheres are close in space but
/// far apart along the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DumbbellParams {
    pub radius_a: f64,
    pub radius_b: f64,
    /// Euclidean gap between the two spheres.
    pub gap: f64,
    pub tube_radius: f64,
    /// How far the tube dips below the spheres.
    pub tube_depth: f64,
    pub segments: usize,
    pub rings: usize,
    pub tube_rings: usize,
}

impl Default for DumbbellParams {
    fn default() -> Self {
        DumbbellParams {
            radius_a: 0.5,
            radius_b: 0.5,
            gap: 0.15,
            tube_radius: 0.08,
            tube_depth: 0.6,
            segments: 32,
            rings: 24,
            tube_rings: 48,
        }
    }
}

pub fn dumbbell(p: &DumbbellParams) -> Fixture {
    let ca = [-(p.radius_a + p.gap / 2.0), 0.0, 0.0];
    let cb = [p.radius_b + p.gap / 2.0, 0.0, 0.0];
    let (a, ring_a) = sphere_with_south_hole(p.radius_a, ca, p.tube_radius, p.rings, p.segments);
    let (b, ring_b) = sphere_with_south_hole(p.radius_b, cb, p.tube_radius, p.rings, p.segments);
    let n = p.segments;
    let mut vertices = a.vertices.clone();
    let mut faces = a.faces.clone();
    let mut labels = vec![0; a.num_faces()];
    let off_b = vertices.len();
    vertices.extend_from_slice(&b.vertices);
    faces.extend(b.faces.iter().map(|f| [f[0] + off_b, f[1] + off_b, f[2] + off_b]));
    labels.extend(std::iter::repeat_n(1, b.num_faces()));

    let pa = vertices[ring_a[0]];
    let pb = vertices[off_b + ring_b[0]];
    let start = [ca[0], pa[1], 0.0];
    let end = [cb[0], pb[1], 0.0];
    let half = (end[0] - start[0]) / 2.0;
    let mid_x = (end[0] + start[0]) / 2.0;
    let path = |t: f64| -> (Vec3, Vec3) {
        let pos = [
            mid_x - half * t.cos(),
            start[1] + (end[1] - start[1]) * (1.0 - t.cos()) / 2.0 - p.tube_depth * t.sin(),
            0.0,
        ];
        let tangent = [
            half * t.sin(),
            (end[1] - start[1]) * t.sin() / 2.0 - p.tube_depth * t.cos(),
            0.0,
        ];
        (pos, normalize_or_zero(tangent))
    };
    let z = [0.0, 0.0, 1.0];
    let mut rings: Vec<Vec<usize>> = vec![ring_a.clone()];
    for k in 1..p.tube_rings {
        let t = PI * k as f64 / p.tube_rings as f64;
        let (pos, tangent) = path(t);
        let normal = cross(z, tangent);
        let mut ids = Vec::with_capacity(n);
        for j in 0..n {
            let phi = 2.0 * PI * j as f64 / n as f64;
            vertices.push(add(pos, add(scale(normal, p.tube_radius * phi.cos()), scale(z, p.tube_radius * phi.sin()))));
            ids.push(vertices.len() - 1);
        }
        rings.push(ids);
    }
    // At the far end the transported frame is mirrored in x, so tube
    // segment j meets sphere B's segment n/2 - j.
    rings.push((0..n).map(|j| off_b + ring_b[(n + n / 2 - j) % n]).collect());
    for w in rings.windows(2) {
        for j in 0..n {
            let k = (j + 1) % n;
            faces.push([w[0][j], w[1][j], w[1][k]]);
            faces.push([w[0][j], w[1][k], w[0][k]]);
            labels.push(2);
            labels.push(2);
        }
    }
    Fixture {
        mesh: Mesh {
            vertices,
            faces,
            face_labels: Some(labels),
            vertex_labels: None,
        },
        parts: vec!["sphere a".into(), "sphere b".into(), "tube".into()],
    }
}

/// Capsules-and-spheres figure with the four coarse body classes. Every
/// part is tessellated at roughly the same edge length.
pub fn humanoid() -> Fixture {
    let edge = 0.04;
    let limb = |start: Vec3, end: Vec3, radius: f64, label: i32| {
        let around = (2.0 * PI * radius / edge / 4.0).ceil() as usize * 4;
        labeled(capsule(start, end, radius, around.max(8)), label)
    };
    let head = labeled(icosphere(3, 0.25, [0.0, 1.55, 0.0]), 0);
    let torso = limb([0.0, 0.55, 0.0], [0.0, 1.12, 0.0], 0.28, 1);
    let arm_l = limb([-0.36, 1.22, 0.0], [-0.52, 0.38, 0.05], 0.075, 2);
    let arm_r = limb([0.36, 1.22, 0.0], [0.52, 0.38, 0.05], 0.075, 2);
    let leg_l = limb([-0.14, 0.45, 0.0], [-0.18, -0.65, 0.0], 0.1, 3);
    let leg_r = limb([0.14, 0.45, 0.0], [0.18, -0.65, 0.0], 0.1, 3);
    Fixture {
        mesh: Mesh::merge(&[head, torso, arm_l, arm_r, leg_l, leg_r]),
        parts: vec!["head".into(), "torso".into(), "arm".into(), "leg".into()],
    }
}

pub fn make_fixture(kind: FixtureKind) -> Fixture {
    match kind {
        FixtureKind::Snowman => snowman(),
        FixtureKind::Dumbbell => dumbbell(&DumbbellParams::default()),
        FixtureKind::Humanoid => humanoid(),
        FixtureKind::Grid => Fixture {
            mesh: labeled(grid(10, 10), 0),
            parts: vec!["grid".into()],
        },
        FixtureKind::Icosphere => Fixture {
            mesh: labeled(icosphere(3, 1.0, [0.0; 3]), 0),
            parts: vec!["sphere".into()],
        },
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn icosphere_counts() {
        let m = icosphere(3, 1.0, [0.0; 3]);
        assert_eq!(m.num_faces(), 1280);
        assert_eq!(m.num_vertices(), 642);
        assert_eq!(icosphere(4, 1.0, [0.0; 3]).num_faces(), 5120);
    }

    #[test]
    fn grid_counts() {
        let m = make_fixture(FixtureKind::Grid).mesh;
        assert_eq!(m.num_faces(), 200);
        assert!(m.face_labels.unwrap().iter().all(|&l| l == 0));
    }

    /// Closed 2-manifold: every edge is shared by exactly two faces.
    fn assert_closed(m: &Mesh) {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &m.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2), "open or non-manifold edges");
    }

    #[test]
    fn dumbbell_is_one_closed_surface() {
        let f = dumbbell(&DumbbellParams::default());
        assert_closed(&f.mesh);
        let labels = f.mesh.face_labels.as_ref().unwrap();
        for c in 0..3 {
            assert!(labels.iter().any(|&l| l == c));
        }
    }

    #[test]
    fn dumbbell_spheres_are_far_apart_on_the_surface() {
        use crate::geodesic::DualGraph;
        use crate::mesh::dist;
        let f = dumbbell(&DumbbellParams::default());
        let m = &f.mesh;
        let labels = m.face_labels.as_ref().unwrap();
        let of = |c: i32| -> Vec<usize> { (0..m.num_faces()).filter(|&i| labels[i] == c).collect() };
        let (a, b) = (of(0), of(1));
        let centroids = m.centroids();
        let gap = a
            .iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| dist(centroids[i], centroids[j]))
            .fold(f64::INFINITY, f64::min);
        // every surface path from a to b leaves a through a face touching the tube
        let tube_vertices: HashSet<usize> = (0..m.num_faces())
            .filter(|&i| labels[i] == 2)
            .flat_map(|i| m.faces[i])
            .collect();
        let exits: Vec<usize> = a
            .iter()
            .copied()
            .filter(|&i| m.faces[i].iter().any(|v| tube_vertices.contains(v)))
            .collect();
        assert!(!exits.is_empty());
        let graph = DualGraph::new(m);
        let separation = exits
            .iter()
            .map(|&s| {
                let d = graph.shortest_paths(s, None);
                b.iter().map(|&j| d[j]).fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(separation > 3.0 * gap, "separation {separation} gap {gap}");
    }

    #[test]
    fn capsule_is_closed() {
        assert_closed(&capsule([0.0; 3], [0.3, 1.0, -0.2], 0.2, 16));
    }

    #[test]
    fn snowman_has_two_parts() {
        let f = snowman();
        assert!(f.mesh.num_faces() <= 5000);
        let labels = f.mesh.face_labels.unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 1280);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 1280);
    }

    #[test]
    fn humanoid_parts() {
        let f = humanoid();
        assert_eq!(f.parts.len(), 4);
        let labels = f.mesh.face_labels.unwrap();
        for c in 0..4 {
            assert!(labels.contains(&c));
        }
    }
}
