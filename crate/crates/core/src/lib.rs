//! Zero-shot 3D mesh part segmentation from multi-view 2D bounding boxes.
//!
//! A mesh is rendered from random views, a detector proposes boxes per text
//! prompt and view, and the boxes are lifted to per-face scores. Scores are
//! modulated by a Gaussian fit over geodesic distances from each box's
//! central face and by the visible fraction of each face's q-ring
//! neighborhood before being aggregated across views.

pub mod fixtures;
pub mod detector;
pub mod eval;
pub mod geodesic;
pub mod mesh;
pub mod pipeline;
pub mod render;
pub mod scoring;
