use rayon::prelude::*;

use super::Mesh;

/// Per-face neighborhoods of all faces within `q` shared-vertex hops,
/// the face itself included. Stored as sorted CSR rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QRingIndex {
    q: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl QRingIndex {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_faces(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, face: usize) -> &[u32] {
        &self.neighbors[self.offsets[face]..self.offsets[face + 1]]
    }

    pub fn contains(&self, face: usize, other: usize) -> bool {
        self.neighbors(face).binary_search(&(other as u32)).is_ok()
    }
}

/// Breadth-first search over the shared-vertex face graph, truncated at
/// depth `q`. `q = 0` is treated as 1.
pub fn build_q_ring(mesh: &Mesh, q: usize) -> QRingIndex {
    let q = q.max(1);
    let adjacency = mesh.face_adjacency();
    let n = mesh.num_faces();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![u32::MAX; n], Vec::new()),
            |(stamp, frontier), f| {
                let mark = f as u32;
                let mut out = vec![f as u32];
                stamp[f] = mark;
                frontier.clear();
                frontier.push(f);
                for _ in 0..q {
                    let mut next = Vec::new();
                    for &g in frontier.iter() {
                        for &h in &adjacency[g] {
                            if stamp[h] != mark {
                                stamp[h] = mark;
                                out.push(h as u32);
                                next.push(h);
                            }
                        }
                    }
                    if next.is_empty() {
                        break;
                    }
                    *frontier = next;
                }
                out.sort_unstable();
                out
            },
        )
        .collect();
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut neighbors = Vec::with_capacity(rows.iter().map(Vec::len).sum());
    for r in rows {
        neighbors.extend_from_slice(&r);
        offsets.push(neighbors.len());
    }
    QRingIndex {
        q,
        offsets,
        neighbors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::collections::{HashSet, VecDeque};

    fn tetrahedron() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    /// Independent oracle: explicit adjacency from pairwise vertex sharing,
    /// then plain BFS with a distance map.
    fn oracle(mesh: &Mesh, face: usize, q: usize) -> HashSet<usize> {
        let n = mesh.num_faces();
        let shares = |a: usize, b: usize| {
            mesh.faces[a].iter().any(|v| mesh.faces[b].contains(v))
        };
        let mut depth = vec![usize::MAX; n];
        depth[face] = 0;
        let mut queue = VecDeque::from([face]);
        while let Some(f) = queue.pop_front() {
            if depth[f] == q {
                continue;
            }
            for g in 0..n {
                if g != f && depth[g] == usize::MAX && shares(f, g) {
                    depth[g] = depth[f] + 1;
                    queue.push_back(g);
                }
            }
        }
        (0..n).filter(|&g| depth[g] != usize::MAX).collect()
    }

    #[test]
    fn tetrahedron_one_ring_is_complete() {
        let idx = build_q_ring(&tetrahedron(), 1);
        for f in 0..4 {
            assert_eq!(idx.neighbors(f), &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn isolated_triangle() {
        let m = Mesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        assert_eq!(build_q_ring(&m, 5).neighbors(0), &[0]);
    }

    #[test]
    fn grid_matches_bfs_oracle() {
        let grid = fixtures::grid(10, 10);
        let idx = build_q_ring(&grid, 2);
        // interior face: cell (4, 5), first triangle
        let face = 2 * (5 * 10 + 4);
        let expected = oracle(&grid, face, 2);
        let got: HashSet<usize> = idx.neighbors(face).iter().map(|&g| g as usize).collect();
        assert_eq!(got, expected);
        for f in (0..grid.num_faces()).step_by(7) {
            let got: HashSet<usize> = idx.neighbors(f).iter().map(|&g| g as usize).collect();
            assert_eq!(got, oracle(&grid, f, 2), "face {f}");
        }
    }
}
