use rayon::prelude::*;

use super::{view_transform, Camera, RenderError, RenderOutput, RenderSettings, BACKGROUND};
use crate::mesh::{dot, normalize_or_zero, sub, Mesh};

const BAND_ROWS: usize = 16;
const NEAR: f64 = 1e-6;
const AMBIENT: f64 = 0.25;

struct ScreenTri {
    face: u32,
    p: [[f64; 2]; 3],
    inv_z: [f64; 3],
    area2: f64,
    row_min: usize,
    row_max: usize,
    col_min: usize,
    col_max: usize,
}

/// Renders one view. The nearest face wins each pixel center; equal depths
/// keep the lower face index. Output is bit-identical for identical input
/// regardless of thread count.
pub fn rasterize(
    mesh: &Mesh,
    cam: &Camera,
    settings: &RenderSettings,
    face_colors: Option<&[[u8; 3]]>,
) -> Result<RenderOutput, RenderError> {
    cam.validate()?;
    let (w, h) = (settings.width, settings.height);
    if w < 16 || h < 16 {
        return Err(RenderError::InvalidResolution(w, h));
    }
    if let Some(c) = face_colors {
        if c.len() != mesh.num_faces() {
            return Err(RenderError::FaceColors {
                got: c.len(),
                expected: mesh.num_faces(),
            });
        }
    }

    let focal = 1.0 / (cam.fov_y / 2.0).tan();
    let aspect = w as f64 / h as f64;
    let projected: Vec<[f64; 3]> = mesh
        .vertices
        .iter()
        .map(|&v| {
            let c = view_transform(cam, v);
            let z = c[2];
            if z <= NEAR {
                return [f64::NAN, f64::NAN, z];
            }
            let nx = focal * c[0] / (z * aspect);
            let ny = focal * c[1] / z;
            [(nx + 1.0) * 0.5 * w as f64, (ny + 1.0) * 0.5 * h as f64, z]
        })
        .collect();

    let tris: Vec<ScreenTri> = mesh
        .faces
        .iter()
        .enumerate()
        .filter_map(|(fi, f)| {
            let q = [projected[f[0]], projected[f[1]], projected[f[2]]];
            if q.iter().any(|p| p[2] <= NEAR) {
                return None;
            }
            let p = [[q[0][0], q[0][1]], [q[1][0], q[1][1]], [q[2][0], q[2][1]]];
            let area2 = edge(p[0], p[1], p[2]);
            if area2 == 0.0 || !area2.is_finite() {
                return None;
            }
            let xmin = p.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let xmax = p.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            let ymin = p.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
            let ymax = p.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
            // pixel centers at col + 0.5 and y = h - row - 0.5
            let col_min = (xmin - 0.5).ceil().max(0.0);
            let col_max = (xmax - 0.5).floor().min(w as f64 - 1.0);
            let row_min = (h as f64 - ymax - 0.5).ceil().max(0.0);
            let row_max = (h as f64 - ymin - 0.5).floor().min(h as f64 - 1.0);
            if col_min > col_max || row_min > row_max {
                return None;
            }
            Some(ScreenTri {
                face: fi as u32,
                p,
                inv_z: [1.0 / q[0][2], 1.0 / q[1][2], 1.0 / q[2][2]],
                area2,
                row_min: row_min as usize,
                row_max: row_max as usize,
                col_min: col_min as usize,
                col_max: col_max as usize,
            })
        })
        .collect();

    let bands = h.div_ceil(BAND_ROWS);
    let mut band_tris: Vec<Vec<usize>> = vec![Vec::new(); bands];
    for (i, t) in tris.iter().enumerate() {
        for b in t.row_min / BAND_ROWS..=t.row_max / BAND_ROWS {
            band_tris[b].push(i);
        }
    }

    let mut pixel2face = vec![BACKGROUND; w * h];
    pixel2face
        .par_chunks_mut(w * BAND_ROWS)
        .enumerate()
        .for_each(|(band, out)| {
            let row0 = band * BAND_ROWS;
            let rows = out.len() / w;
            let mut depth = vec![f64::NEG_INFINITY; out.len()];
            for &ti in &band_tris[band] {
                let t = &tris[ti];
                let r0 = t.row_min.max(row0);
                let r1 = t.row_max.min(row0 + rows - 1);
                for row in r0..=r1 {
                    let py = h as f64 - row as f64 - 0.5;
                    for col in t.col_min..=t.col_max {
                        let px = col as f64 + 0.5;
                        let s = [px, py];
                        let w0 = edge(t.p[1], t.p[2], s) / t.area2;
                        let w1 = edge(t.p[2], t.p[0], s) / t.area2;
                        let w2 = edge(t.p[0], t.p[1], s) / t.area2;
                        if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                            continue;
                        }
                        let inv_z = w0 * t.inv_z[0] + w1 * t.inv_z[1] + w2 * t.inv_z[2];
                        let idx = (row - row0) * w + col;
                        if inv_z > depth[idx] {
                            depth[idx] = inv_z;
                            out[idx] = t.face;
                        }
                    }
                }
            }
        });

    let mut face_pixel_area = vec![0u32; mesh.num_faces()];
    for &f in &pixel2face {
        if f != BACKGROUND {
            face_pixel_area[f as usize] += 1;
        }
    }
    let visible_faces: Vec<usize> = face_pixel_area
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0)
        .map(|(f, _)| f)
        .collect();

    let eye = cam.position();
    let shade = |f: usize| -> [u8; 3] {
        if let Some(c) = face_colors {
            return c[f];
        }
        let n = mesh.face_normal(f);
        let l = normalize_or_zero(sub(eye, mesh.centroid(f)));
        let k = AMBIENT + (1.0 - AMBIENT) * dot(n, l).abs();
        settings.base_color.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8)
    };
    let mut colors = vec![[0u8; 3]; mesh.num_faces()];
    for &f in &visible_faces {
        colors[f] = shade(f);
    }
    let mut image = Vec::with_capacity(3 * w * h);
    for &f in &pixel2face {
        let c = if f == BACKGROUND {
            settings.background
        } else {
            colors[f as usize]
        };
        image.extend_from_slice(&c);
    }

    Ok(RenderOutput {
        width: w,
        height: h,
        image,
        pixel2face,
        face_pixel_area,
        visible_faces,
        projected_vertices: projected,
    })
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}
