//! Heat-method geodesics: short-time heat flow from the source face,
//! normalized gradient field, then a Poisson solve on the cotangent
//! Laplacian. The source face is split at its centroid and heat starts from
//! that point, so distances are measured from the same point the dual graph
//! uses. Vertex distances are averaged onto faces.

use crate::mesh::{cross, dot, norm, scale, sub, Mesh, Vec3};

const CG_TOLERANCE: f64 = 1e-10;

/// Symmetric sparse matrix in CSR form.
#[derive(Debug, Clone)]
struct Csr {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_by_key(|e| (e.0, e.1));
        let mut offsets = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = (usize::MAX, usize::MAX);
        for (r, c, v) in t {
            if (r, c) == last {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                offsets[r + 1] += 1;
                last = (r, c);
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Csr { offsets, cols, vals }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.offsets[r]..self.offsets[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *o = s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.offsets.len() - 1)
            .map(|r| {
                (self.offsets[r]..self.offsets[r + 1])
                    .find(|&k| self.cols[k] == r)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }

    /// `self + s * diag(d)`
    fn plus_diagonal(&self, d: &[f64], s: f64) -> Csr {
        let mut out = self.clone();
        for (r, &dv) in d.iter().enumerate() {
            for k in out.offsets[r]..out.offsets[r + 1] {
                if out.cols[k] == r {
                    out.vals[k] += s * dv;
                }
            }
        }
        out
    }

    fn scaled(&self, s: f64) -> Csr {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// Jacobi-preconditioned conjugate gradients. Works on semidefinite
/// systems whose right-hand side lies in the range.
fn conjugate_gradient(a: &Csr, b: &[f64], max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let diag: Vec<f64> = a.diagonal().iter().map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return x;
    }
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..max_iter {
        a.mul(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap.abs() < f64::MIN_POSITIVE {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm <= CG_TOLERANCE * b_norm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

/// Cotangent operators of one triangulation.
struct Operators {
    /// Positive semidefinite cotangent stiffness matrix.
    laplacian: Csr,
    /// `M + t L` for the heat step.
    heat_operator: Csr,
    /// Per face: cotangents of the angles at each corner.
    cotangents: Vec<[f64; 3]>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
}

impl Operators {
    fn build(vertices: &[Vec3], faces: &[[usize; 3]], t: f64) -> Self {
        let n = vertices.len();
        let mut triplets = Vec::with_capacity(12 * faces.len() + n);
        let mut mass = vec![0.0; n];
        let mut cotangents = Vec::with_capacity(faces.len());
        let mut normals = Vec::with_capacity(faces.len());
        let mut areas = Vec::with_capacity(faces.len());
        for f in faces {
            let p = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
            let nrm = cross(sub(p[1], p[0]), sub(p[2], p[0]));
            let double_area = norm(nrm);
            let area = 0.5 * double_area;
            areas.push(area);
            normals.push(if double_area > 0.0 { scale(nrm, 1.0 / double_area) } else { [0.0; 3] });
            let mut cots = [0.0; 3];
            for k in 0..3 {
                let a = sub(p[(k + 1) % 3], p[k]);
                let b = sub(p[(k + 2) % 3], p[k]);
                let c = norm(cross(a, b));
                cots[k] = if c > 0.0 { dot(a, b) / c } else { 0.0 };
            }
            cotangents.push(cots);
            for k in 0..3 {
                // edge opposite corner k joins corners k+1 and k+2
                let (i, j) = (f[(k + 1) % 3], f[(k + 2) % 3]);
                let w = 0.5 * cots[k];
                triplets.push((i, j, -w));
                triplets.push((j, i, -w));
                triplets.push((i, i, w));
                triplets.push((j, j, w));
                mass[f[k]] += area / 3.0;
            }
        }
        for (i, m) in mass.iter_mut().enumerate() {
            triplets.push((i, i, 0.0));
            if *m <= 0.0 {
                *m = 1e-12;
            }
        }
        let laplacian = Csr::from_triplets(n, triplets);
        let heat_operator = laplacian.scaled(t).plus_diagonal(&mass, 1.0);
        Operators {
            laplacian,
            heat_operator,
            cotangents,
            normals,
            areas,
        }
    }

    /// Heat-method distance from vertex `source` to every vertex.
    fn solve(&self, vertices: &[Vec3], faces: &[[usize; 3]], source: usize, comp: &[usize], num_comp: usize) -> Vec<f64> {
        let n = vertices.len();
        let mut u0 = vec![0.0; n];
        u0[source] = 1.0;
        let u = conjugate_gradient(&self.heat_operator, &u0, 20 * n + 100);

        let mut div = vec![0.0; n];
        for (fi, f) in faces.iter().enumerate() {
            if self.areas[fi] <= 0.0 {
                continue;
            }
            let p = [vertices[f[0]], vertices[f[1]], vertices[f[2]]];
            let nrm = self.normals[fi];
            let mut grad = [0.0; 3];
            for k in 0..3 {
                let e = sub(p[(k + 2) % 3], p[(k + 1) % 3]);
                let g = scale(cross(nrm, e), u[f[k]]);
                grad = [grad[0] + g[0], grad[1] + g[1], grad[2] + g[2]];
            }
            let gnorm = norm(grad);
            if !(gnorm > 1e-300) {
                continue;
            }
            let x = scale(grad, -1.0 / gnorm);
            let cots = self.cotangents[fi];
            for k in 0..3 {
                let i = (k + 1) % 3;
                let j = (k + 2) % 3;
                let e1 = sub(p[i], p[k]);
                let e2 = sub(p[j], p[k]);
                // angle opposite e1 sits at corner j, opposite e2 at corner i
                div[f[k]] += 0.5 * (cots[j] * dot(e1, x) + cots[i] * dot(e2, x));
            }
        }
        // make the right-hand side consistent on every component
        let mut sums = vec![0.0; num_comp];
        let mut counts = vec![0usize; num_comp];
        for v in 0..n {
            sums[comp[v]] += div[v];
            counts[comp[v]] += 1;
        }
        let rhs: Vec<f64> = (0..n).map(|v| -(div[v] - sums[comp[v]] / counts[comp[v]] as f64)).collect();
        let phi = conjugate_gradient(&self.laplacian, &rhs, 20 * n + 100);
        let base = phi[source];
        let shifted: Vec<f64> = phi.iter().map(|p| p - base).collect();
        // orient so distance grows away from the source
        let mean: f64 = (0..n).filter(|&v| comp[v] == comp[source]).map(|v| shifted[v]).sum();
        let sign = if mean < 0.0 { -1.0 } else { 1.0 };
        shifted.iter().map(|d| sign * d).collect()
    }
}

#[derive(Debug, Clone)]
pub struct HeatSolver {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    time_step: f64,
    vertex_component: Vec<usize>,
    num_components: usize,
}

impl HeatSolver {
    pub fn new(mesh: &Mesh) -> Self {
        let mut edge_sum = 0.0;
        let mut edge_count = 0usize;
        for fi in 0..mesh.num_faces() {
            let p = mesh.face_vertices(fi);
            for k in 0..3 {
                edge_sum += norm(sub(p[(k + 1) % 3], p[k]));
                edge_count += 1;
            }
        }
        let h = if edge_count > 0 { edge_sum / edge_count as f64 } else { 1.0 };
        let (vertex_component, num_components) = components(mesh.num_vertices(), &mesh.faces);
        HeatSolver {
            vertices: mesh.vertices.clone(),
            faces: mesh.faces.clone(),
            time_step: h * h,
            vertex_component,
            num_components,
        }
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Distances from the centroid of `source` to every face; faces in
    /// other connected components are infinite.
    pub fn face_distances(&self, source: usize) -> Vec<f64> {
        let [a, b, c] = self.faces[source];
        let center = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.push(scale(
            [
                self.vertices[a][0] + self.vertices[b][0] + self.vertices[c][0],
                self.vertices[a][1] + self.vertices[b][1] + self.vertices[c][1],
                self.vertices[a][2] + self.vertices[b][2] + self.vertices[c][2],
            ],
            1.0 / 3.0,
        ));
        let mut faces = self.faces.clone();
        faces[source] = [a, b, center];
        faces.push([b, c, center]);
        faces.push([c, a, center]);
        let mut comp = self.vertex_component.clone();
        comp.push(self.vertex_component[a]);

        let ops = Operators::build(&vertices, &faces, self.time_step);
        let phi = ops.solve(&vertices, &faces, center, &comp, self.num_components);
        let src_comp = comp[center];
        self.faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                if fi == source {
                    0.0
                } else if self.vertex_component[f[0]] != src_comp {
                    f64::INFINITY
                } else {
                    (f.iter().map(|&v| phi[v]).sum::<f64>() / 3.0).max(0.0)
                }
            })
            .collect()
    }
}

fn components(n: usize, faces: &[[usize; 3]]) -> (Vec<usize>, usize) {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for f in faces {
        for k in 1..3 {
            let a = find(&mut parent, f[0]);
            let b = find(&mut parent, f[k]);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = vec![0; n];
    for v in 0..n {
        let r = find(&mut parent, v);
        if label[r] == usize::MAX {
            label[r] = next;
            next += 1;
        }
        out[v] = label[r];
    }
    (out, next.max(1))
}
