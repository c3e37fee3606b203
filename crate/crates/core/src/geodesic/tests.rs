use super::*;
use crate::fixtures::{grid, icosphere};
use crate::mesh::{norm, normalize_or_zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, Normal as StatNormal};

fn field(distances: &[f64]) -> GeodesicField {
    GeodesicField {
        source: 0,
        faces: (0..distances.len()).collect(),
        distances: distances.to_vec(),
    }
}

/// All-pairs shortest paths over faces sharing a vertex, built straight
/// from the face list.
fn floyd_warshall(mesh: &Mesh) -> Vec<Vec<f64>> {
    let n = mesh.num_faces();
    let c = mesh.centroids();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 0..n {
        d[i][i] = 0.0;
        for j in 0..n {
            if i != j && mesh.faces[i].iter().any(|v| mesh.faces[j].contains(v)) {
                d[i][j] = dist(c[i], c[j]);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

fn assert_matches_oracle(mesh: &Mesh) {
    let oracle = floyd_warshall(mesh);
    let g = DualGraph::new(mesh);
    for s in 0..mesh.num_faces() {
        let d = g.shortest_paths(s, None);
        for t in 0..mesh.num_faces() {
            let (a, b) = (d[t], oracle[s][t]);
            if b.is_finite() {
                assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{s}->{t}: {a} vs {b}");
            } else {
                assert!(a.is_infinite());
            }
        }
    }
}

#[test]
fn graph_matches_floyd_warshall_on_small_meshes() {
    assert_matches_oracle(&grid(10, 10));
    assert_matches_oracle(&icosphere(1, 1.0, [0.0; 3]));
    let two = Mesh::merge(&[icosphere(0, 1.0, [0.0; 3]), icosphere(0, 1.0, [3.0, 0.0, 0.0])]);
    assert_matches_oracle(&two);
}

#[test]
fn graph_is_symmetric_and_satisfies_triangle_inequality() {
    let m = icosphere(1, 1.0, [0.0; 3]);
    let g = DualGraph::new(&m);
    let all: Vec<Vec<f64>> = (0..m.num_faces()).map(|s| g.shortest_paths(s, None)).collect();
    for a in 0..m.num_faces() {
        assert_eq!(all[a][a], 0.0);
        for b in 0..m.num_faces() {
            assert!((all[a][b] - all[b][a]).abs() < 1e-12);
            for c in (0..m.num_faces()).step_by(7) {
                assert!(all[a][b] <= all[a][c] + all[c][b] + 1e-12);
            }
        }
    }
}

#[test]
fn early_stop_agrees_with_full_run() {
    let m = grid(20, 20);
    let g = DualGraph::new(&m);
    let full = g.shortest_paths(17, None);
    let targets = [3, 40, 41, 399];
    let part = g.shortest_paths(17, Some(&targets));
    for &t in &targets {
        assert_eq!(full[t], part[t]);
    }
}

#[test]
fn planar_grid_within_15_percent_of_euclidean() {
    let m = grid(20, 20);
    let c = m.centroids();
    let g = DualGraph::new(&m);
    let mut worst: f64 = 0.0;
    for s in [0, 57, 210, 399, 421, 799] {
        let d = g.shortest_paths(s, None);
        for t in 0..m.num_faces() {
            let e = dist(c[s], c[t]);
            if e > 1e-9 {
                worst = worst.max((d[t] - e).abs() / e);
            }
        }
    }
    assert!(worst <= 0.15, "worst relative error {worst}");
}

fn antipodal_pairs(m: &Mesh) -> Vec<(usize, usize)> {
    let c: Vec<Vec3> = m.centroids().into_iter().map(normalize_or_zero).collect();
    (0..m.num_faces())
        .step_by(97)
        .map(|s| {
            let t = (0..m.num_faces())
                .min_by(|&a, &b| dot(c[s], c[a]).total_cmp(&dot(c[s], c[b])))
                .unwrap();
            (s, t)
        })
        .collect()
}

#[test]
fn icosphere_antipodes_within_10_percent_of_pi() {
    let m = icosphere(4, 1.0, [0.0; 3]);
    let g = DualGraph::new(&m);
    for (s, t) in antipodal_pairs(&m) {
        let d = g.shortest_paths(s, Some(&[t]))[t];
        assert!((d - std::f64::consts::PI).abs() / std::f64::consts::PI <= 0.10, "{s}->{t}: {d}");
    }
}

#[test]
fn heat_agrees_with_graph() {
    let plane = grid(20, 20);
    let sphere = icosphere(3, 1.0, [0.0; 3]);
    for (m, sources) in [(&plane, vec![0, 210, 421]), (&sphere, vec![0, 600])] {
        let graph = Geodesics::new(m, GeodesicBackend::Graph);
        let heat = Geodesics::new(m, GeodesicBackend::Heat);
        let all: Vec<usize> = (0..m.num_faces()).collect();
        let diam = m.diameter();
        for s in sources {
            let a = graph.field(s, &all).unwrap();
            let b = heat.field(s, &all).unwrap();
            assert_eq!(b.distances[s], 0.0);
            for t in 0..m.num_faces() {
                // relative error is meaningless right next to the source
                if a.distances[t] < 0.1 * diam {
                    continue;
                }
                let rel = (a.distances[t] - b.distances[t]).abs() / a.distances[t];
                assert!(rel <= 0.20, "face {s}->{t}: graph {} heat {}", a.distances[t], b.distances[t]);
            }
        }
    }
}

#[test]
fn heat_marks_other_components_unreachable() {
    let m = Mesh::merge(&[icosphere(1, 1.0, [0.0; 3]), icosphere(1, 1.0, [3.0, 0.0, 0.0])]);
    let f = geodesic_distances(&m, 0, &[0, 1, 100], GeodesicBackend::Heat).unwrap();
    assert_eq!(f.distances[0], 0.0);
    assert!(f.distances[1].is_finite() && f.distances[1] > 0.0);
    assert!(f.distances[2].is_infinite());
    let g = geodesic_distances(&m, 0, &[100], GeodesicBackend::Graph).unwrap();
    assert!(g.distances[0].is_infinite());
}

#[test]
fn field_errors() {
    let m = grid(2, 2);
    assert_eq!(geodesic_distances(&m, 0, &[], GeodesicBackend::Graph), Err(GeodesicError::EmptyTarget));
    assert_eq!(
        geodesic_distances(&m, 8, &[0], GeodesicBackend::Graph),
        Err(GeodesicError::FaceOutOfRange { face: 8, count: 8 })
    );
    assert_eq!(
        geodesic_distances(&m, 0, &[1, 9], GeodesicBackend::Graph),
        Err(GeodesicError::FaceOutOfRange { face: 9, count: 8 })
    );
    let f = geodesic_distances(&m, 3, &[3, 0], GeodesicBackend::Graph).unwrap();
    assert_eq!(f.get(3), Some(0.0));
    assert_eq!(f.get(5), None);
}

#[test]
fn capital_of_singleton() {
    let m = grid(4, 4);
    assert_eq!(capital_face(&m, &[13], &[0; 32], CapitalAverage::AreaWeightedCentroids), Ok(13));
    assert_eq!(capital_face(&m, &[13], &[0; 32], CapitalAverage::UniqueVertices), Ok(13));
    assert_eq!(capital_face(&m, &[], &[], CapitalAverage::default()), Err(GeodesicError::EmptyTarget));
}

#[test]
fn capital_of_symmetric_fan_is_center() {
    // five wedges spanning a half disc, symmetric about the y axis
    let mut vertices = vec![[0.0, 0.0, 0.0]];
    for k in 0..=5 {
        let a = std::f64::consts::PI * k as f64 / 5.0;
        vertices.push([a.cos(), a.sin(), 0.0]);
    }
    let faces = (0..5).map(|k| [0, k + 1, k + 2]).collect();
    let m = Mesh::new(vertices, faces).unwrap();
    let target = [0, 1, 2, 3, 4];
    assert_eq!(capital_face(&m, &target, &[10; 5], CapitalAverage::AreaWeightedCentroids), Ok(2));
    assert_eq!(capital_face(&m, &target, &[10; 5], CapitalAverage::UniqueVertices), Ok(2));
}

#[test]
fn capital_of_polar_cap_contains_pole() {
    let m = icosphere(4, 1.0, [0.0; 3]);
    let target: Vec<usize> = (0..m.num_faces()).filter(|&f| m.centroid(f)[2] > 0.8).collect();
    let areas = vec![1u32; m.num_faces()];
    let got = capital_face(&m, &target, &areas, CapitalAverage::AreaWeightedCentroids).unwrap();

    // brute force: the cap face with the smallest distance to the anchor,
    // which lies on the z axis by symmetry of the cap
    let sum = target.iter().fold([0.0; 3], |s, &f| add(s, m.centroid(f)));
    let anchor = scale(sum, 1.0 / target.len() as f64);
    assert!(anchor[0].abs() < 1e-9 && anchor[1].abs() < 1e-9 && anchor[2] > 0.8);
    let best = target
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let [a0, a1, a2] = m.face_vertices(a);
            let [b0, b1, b2] = m.face_vertices(b);
            let da = dist(anchor, closest_point_on_triangle(anchor, a0, a1, a2));
            let db = dist(anchor, closest_point_on_triangle(anchor, b0, b1, b2));
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .unwrap();
    assert_eq!(got, best);

    // the chosen face is pierced by the +z axis
    let [a, b, c] = m.face_vertices(got);
    let pole = [0.0, 0.0, 1.0];
    let s1 = dot(cross3(sub(b, a), sub(pole, a)), pole);
    let s2 = dot(cross3(sub(c, b), sub(pole, b)), pole);
    let s3 = dot(cross3(sub(a, c), sub(pole, c)), pole);
    assert!((s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0));
}

fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    crate::mesh::cross(a, b)
}

#[test]
fn closest_point_matches_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let mut r = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let (a, b, c, p) = (r(), r(), r(), r());
        let q = closest_point_on_triangle(p, a, b, c);
        let best = dist(p, q);
        let n = 60;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let (u, v) = (i as f64 / n as f64, j as f64 / n as f64);
                let s = add(a, add(scale(sub(b, a), u), scale(sub(c, a), v)));
                assert!(best <= dist(p, s) + 1e-12);
            }
        }
    }
}

#[test]
fn gaussian_equal_distances_are_uniform() {
    let w = gaussian_reweight(&field(&[0.7; 5]), 1e-6).weights;
    assert!(w.iter().all(|&x| x == w[0] && x > 0.0));
}

#[test]
fn gaussian_is_symmetric_about_mean() {
    let w = gaussian_reweight(&field(&[0.0, 1.0, 2.0]), 1e-6).weights;
    assert!(w[1] > w[0] && w[1] > w[2]);
    assert!((w[0] - w[2]).abs() < 1e-15);
}

#[test]
fn gaussian_matches_independent_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = rand_distr::Normal::new(2.0, 0.5).unwrap();
    let d: Vec<f64> = (0..200)
        .map(|_| rand_distr::Distribution::sample(&normal, &mut rng))
        .map(|x: f64| x.abs())
        .collect();
    let w = gaussian_reweight(&field(&d), 1e-6).weights;
    let n = d.len() as f64;
    let mu = d.iter().sum::<f64>() / n;
    let sigma = (d.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n).sqrt();
    let oracle = StatNormal::new(mu, sigma).unwrap();
    for i in 0..d.len() {
        let ratio = w[i] / w[0];
        let expect = oracle.pdf(d[i]) / oracle.pdf(d[0]);
        assert!((ratio - expect).abs() <= 1e-9 * expect.max(1.0), "{ratio} vs {expect}");
        assert!((w[i] - oracle.pdf(d[i])).abs() <= 1e-9 * w[i].max(1.0));
    }
}

#[test]
fn gaussian_ranking_is_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..4.0)).collect();
    let rank = |w: &[f64]| {
        let mut idx: Vec<usize> = (0..w.len()).collect();
        idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        idx
    };
    let base = gaussian_reweight(&field(&d), 1e-6).weights;
    for c in [0.01, 3.0, 250.0] {
        let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
        let w = gaussian_reweight(&field(&scaled), 1e-6 * c).weights;
        assert_eq!(rank(&w), rank(&base));
        for i in 0..d.len() {
            assert!((w[i] * c - base[i]).abs() <= 1e-9 * base[i].max(1e-300));
        }
    }
}

#[test]
fn gaussian_ignores_unreachable() {
    let w = gaussian_reweight(&field(&[0.0, 1.0, 2.0, f64::INFINITY]), 1e-6).weights;
    let v = gaussian_reweight(&field(&[0.0, 1.0, 2.0]), 1e-6).weights;
    assert_eq!(&w[..3], &v[..]);
    assert_eq!(w[3], 0.0);
}

#[test]
fn max_geodesic_examples() {
    let w = max_geodesic_reweight(&field(&[0.0, 1.0])).weights;
    assert_eq!(w[0], 1.0);
    let eps = MAX_GEODESIC_EPS;
    assert!((w[1] - eps / (1.0 + eps)).abs() < 1e-6 * eps);
    assert!(w[1] > 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
    let w = max_geodesic_reweight(&field(&d)).weights;
    for i in 0..d.len() {
        assert!(w[i] > 0.0 && w[i] <= 1.0);
        for j in 0..d.len() {
            if d[i] < d[j] {
                assert!(w[i] > w[j]);
            }
        }
    }
}

#[test]
fn softmax_examples() {
    assert_eq!(softmax_geodesic_reweight(&field(&[4.2])).weights, vec![1.0]);
    assert_eq!(softmax_geodesic_reweight(&field(&[1.5, 1.5])).weights, vec![0.5, 0.5]);
    let w = softmax_geodesic_reweight(&field(&[0.0, 2f64.ln()])).weights;
    assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 1.0 / 3.0).abs() < 1e-15);
    // shift keeps large distances from underflowing to zero
    let w = softmax_geodesic_reweight(&field(&[900.0, 901.0])).weights;
    assert!(w.iter().all(|&x| x > 0.0));
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn reweightings_are_positive_on_a_real_field() {
    let m = icosphere(3, 1.0, [0.0; 3]);
    let target: Vec<usize> = (0..m.num_faces()).filter(|&f| m.centroid(f)[1] > 0.3).collect();
    let f = geodesic_distances(&m, target[0], &target, GeodesicBackend::Graph).unwrap();
    let floor = SIGMA_FLOOR_FRACTION * m.diameter();
    for mode in [Reweighting::None, Reweighting::Gaussian, Reweighting::Max, Reweighting::Softmax] {
        let w = mode.apply(&f, floor);
        assert_eq!(w.faces, target);
        assert!(w.weights.iter().all(|&x| x > 0.0 && x.is_finite()), "{mode:?}");
    }
    assert!(norm(m.centroid(target[0])) > 0.0);
}

