//! Deterministic perspective software rasterizer with a face-ID buffer, and
//! random camera sampling on a sphere around the normalized mesh.
//!
//! Pixel coordinates use a lower-left origin: x grows to the right, y grows
//! upward, and pixel (col, row) counted from the top covers
//! `[col, col + 1) x [H - row - 1, H - row)`. Rasters (image, pixel2face)
//! are stored row-major starting at the top row.

mod raster;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{add, cross, dot, normalize_or_zero, scale, sub, Mesh, Vec3};

pub use raster::rasterize;

/// pixel2face value for pixels not covered by any face.
pub const BACKGROUND: u32 = u32::MAX;

/// Camera distance in unit-sphere radii; with the 40 degree field of view
/// the normalized mesh fills roughly half the frame.
pub const DEFAULT_CAMERA_DISTANCE: f64 = 3.5;
pub const DEFAULT_FOV_Y: f64 = 40.0 * PI / 180.0;
pub const VIEW_ANGLE_MEAN: f64 = 0.7;
pub const VIEW_ANGLE_STD: f64 = 4.0;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid camera: {0}")]
    InvalidCamera(&'static str),
    #[error("resolution {0}x{1} is below the 16x16 minimum")]
    InvalidResolution(usize, usize),
    #[error("at least one view is required")]
    NoViews,
    #[error("face color table has {got} entries for {expected} faces")]
    FaceColors { got: usize, expected: usize },
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub elevation: f64,
    pub azimuth: f64,
    pub distance: f64,
    pub fov_y: f64,
    pub look_at: Vec3,
}

impl Camera {
    pub fn new(elevation: f64, azimuth: f64, distance: f64, fov_y: f64, look_at: Vec3) -> Result<Self, RenderError> {
        let cam = Camera {
            elevation,
            azimuth,
            distance,
            fov_y,
            look_at,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at the default distance and field of view, aimed at the origin.
    pub fn orbit(elevation: f64, azimuth: f64) -> Self {
        Camera {
            elevation,
            azimuth,
            distance: DEFAULT_CAMERA_DISTANCE,
            fov_y: DEFAULT_FOV_Y,
            look_at: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.distance > 1.0) || !self.distance.is_finite() {
            return Err(RenderError::InvalidCamera("distance must exceed the unit sphere radius"));
        }
        if !(self.fov_y > 0.0 && self.fov_y < PI) {
            return Err(RenderError::InvalidCamera("fov_y must lie in (0, pi)"));
        }
        if !self.elevation.is_finite() || !self.azimuth.is_finite() {
            return Err(RenderError::InvalidCamera("angles must be finite"));
        }
        Ok(())
    }

    pub fn position(&self) -> Vec3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        add(self.look_at, scale([ce * sa, se, ce * ca], self.distance))
    }

    /// Orthonormal (right, up, forward) frame. "up" is the direction of
    /// increasing elevation, so the frame stays defined over the poles.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        let forward = normalize_or_zero(sub(self.look_at, self.position()));
        let up = [-se * sa, ce, -se * ca];
        let right = normalize_or_zero(cross(forward, up));
        (right, up, forward)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewSampling {
    Normal,
    Uniform,
}

impl std::str::FromStr for ViewSampling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(ViewSampling::Normal),
            "uniform" => Ok(ViewSampling::Uniform),
            other => Err(format!("unknown view sampling {other:?}")),
        }
    }
}

/// Draws `count` cameras. Normal mode samples elevation and azimuth
/// independently from N(0.7, 4^2) radians; uniform mode from [0, 2 pi).
pub fn sample_views(count: usize, mode: ViewSampling, seed: u64) -> Result<Vec<Camera>, RenderError> {
    if count == 0 {
        return Err(RenderError::NoViews);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(VIEW_ANGLE_MEAN, VIEW_ANGLE_STD).expect("valid normal parameters");
    Ok((0..count)
        .map(|_| {
            let (elevation, azimuth) = match mode {
                ViewSampling::Normal => (normal.sample(&mut rng), normal.sample(&mut rng)),
                ViewSampling::Uniform => (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)),
            };
            Camera::orbit(elevation, azimuth)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub background: [u8; 3],
    /// Base color for flat diffuse shading when no per-face colors are given.
    pub base_color: [u8; 3],
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            width: 1024,
            height: 1024,
            background: [0, 0, 0],
            base_color: [180, 180, 180],
        }
    }
}

impl RenderSettings {
    pub fn square(size: usize) -> Self {
        RenderSettings {
            width: size,
            height: size,
            ..Default::default()
        }
    }
}

/// Axis-aligned box in pixel units, anchored at its lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    /// From two opposite corners in any order.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BoundingBox {
            x: x0.min(x1),
            y: y0.min(y1),
            w: (x1 - x0).abs(),
            h: (y1 - y0).abs(),
        }
    }

    /// Intersection with the `[0, width] x [0, height]` image rectangle.
    pub fn clamped(&self, width: usize, height: usize) -> BoundingBox {
        let x0 = self.x.clamp(0.0, width as f64);
        let y0 = self.y.clamp(0.0, height as f64);
        let x1 = (self.x + self.w).clamp(0.0, width as f64);
        let y1 = (self.y + self.h).clamp(0.0, height as f64);
        BoundingBox {
            x: x0,
            y: y0,
            w: (x1 - x0).max(0.0),
            h: (y1 - y0).max(0.0),
        }
    }

    /// Half-open containment, so a zero-width box contains nothing.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w >= 0.0 && self.h >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// RGB8, row-major from the top row.
    pub image: Vec<u8>,
    /// Winning face per pixel or [`BACKGROUND`], same layout as `image`.
    pub pixel2face: Vec<u32>,
    pub face_pixel_area: Vec<u32>,
    /// Sorted ids of faces covering at least one pixel.
    pub visible_faces: Vec<usize>,
    /// Per vertex: pixel x, pixel y (lower-left origin) and view depth.
    pub projected_vertices: Vec<Vec3>,
}

impl RenderOutput {
    pub fn face_at(&self, col: usize, row_from_top: usize) -> Option<usize> {
        match self.pixel2face[row_from_top * self.width + col] {
            BACKGROUND => None,
            f => Some(f as usize),
        }
    }

    pub fn background_pixels(&self) -> usize {
        self.pixel2face.iter().filter(|&&f| f == BACKGROUND).count()
    }

    pub fn is_visible(&self, face: usize) -> bool {
        self.face_pixel_area.get(face).is_some_and(|&a| a > 0)
    }

    /// Visible faces with at least one vertex projecting inside the box
    /// (after clamping the box to the image).
    pub fn faces_in_box(&self, mesh: &Mesh, bbox: &BoundingBox) -> Vec<usize> {
        let b = bbox.clamped(self.width, self.height);
        if b.area() <= 0.0 {
            return Vec::new();
        }
        let inside: Vec<bool> = self
            .projected_vertices
            .iter()
            .map(|p| p[2] > 0.0 && b.contains(p[0], p[1]))
            .collect();
        self.visible_faces
            .iter()
            .copied()
            .filter(|&f| mesh.faces[f].iter().any(|&v| inside[v]))
            .collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RenderError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.image)?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<(), RenderError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Raw pixel2face raster: width and height as u32 LE, then one u32 LE
    /// face id per pixel from the top row (`0xFFFFFFFF` = background).
    pub fn encode_pixel2face(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.pixel2face.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for &f in &self.pixel2face {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn write_pixel2face(&self, path: &Path) -> Result<(), RenderError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&self.encode_pixel2face())?;
        file.flush()?;
        Ok(())
    }
}

/// Decodes an RGB8 PNG into (width, height, pixels).
pub fn decode_png(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().ok()?;
    let mut buf = vec![0; reader.output_buffer_size()?];
    let info = reader.next_frame(&mut buf).ok()?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return None;
    }
    buf.truncate(info.buffer_size());
    Some((info.width as usize, info.height as usize, buf))
}

pub(crate) fn view_transform(cam: &Camera, p: Vec3) -> Vec3 {
    let (right, up, forward) = cam.basis();
    let d = sub(p, cam.position());
    [dot(d, right), dot(d, up), dot(d, forward)]
}
