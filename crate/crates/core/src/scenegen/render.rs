//! Axonometric renderer for cube scenes.
//!
//! The camera is orthographic, looking down at a fixed 30 degree elevation
//! from one of four yaw angles. Every visible surface is one of three face
//! orientations (top, front, side), each drawn flat with its own brightness,
//! so a scene rasterizes as a set of screen-space parallelograms with a
//! z-buffer. The class mask is written in the same pass and is therefore
//! pixel-exact against the image.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::house::CubePlacement;
use super::SceneError;
use crate::label::{LabelSpace, LabelSpaceMode, MAX_CUBES};
use crate::{Mask, RgbImage};

/// Camera elevation above the ground plane, degrees.
pub const ELEVATION_DEG: f64 = 30.0;

/// Yaw angles the dataset uses.
pub const VALID_ANGLES: [u32; 4] = [0, 30, 60, 90];

// Sub-pixel offset applied to the projected scene so cube edges never fall
// exactly on pixel centers, which keeps the rasterizer and the ray-cast
// oracle in exact agreement.
const SCREEN_NUDGE: f64 = 0.237_103_77;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub image_size: usize,
    pub cube_px: f64,
    pub palette_seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            image_size: 128,
            cube_px: 14.0,
            palette_seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderedView {
    pub image: RgbImage,
    pub mask: Mask,
}

/// Orthonormal camera basis for a yaw angle: `right` and `up` span the image
/// plane, `dir` points from the camera into the scene. Depth along `dir`
/// increases away from the viewer.
pub fn camera_basis(angle_deg: u32) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let yaw = f64::from(angle_deg).to_radians();
    let el = ELEVATION_DEG.to_radians();
    let (sy, cy) = yaw.sin_cos();
    let (se, ce) = el.sin_cos();
    let right = [cy, -sy, 0.0];
    let up = [sy * se, cy * se, ce];
    let dir = [sy * ce, cy * ce, -se];
    (right, up, dir)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

// The three face orientations a camera with non-negative x/y direction and
// downward-looking z can see: origin offset within the unit cube, the two
// edge vectors, the outward normal and the flat shading factor.
const FACES: [([f64; 3], [f64; 3], [f64; 3], [f64; 3], f64); 3] = [
    // top (z = k+1)
    ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], 1.0),
    // front (y = j)
    ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0], 0.80),
    // side (x = i)
    ([0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], 0.62),
];

fn role_base_rgb(role: super::house::Role) -> [f64; 3] {
    use super::house::Role;
    match role {
        Role::Foundation => [152.0, 112.0, 78.0],
        Role::Wall => [185.0, 142.0, 96.0],
        Role::Roof => [212.0, 168.0, 118.0],
    }
}

const BACKGROUND_RGB: [u8; 3] = [208, 214, 222];

/// Per-cube brightness factors in [0.92, 1.08), one per possible cube id,
/// drawn from the palette seed so the same id always renders the same way.
pub fn cube_jitter(palette_seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(palette_seed ^ 0x5eed_cafe_f00d_u64);
    (0..MAX_CUBES).map(|_| 0.92 + 0.16 * rng.random::<f64>()).collect()
}

fn mask_value(p: &CubePlacement, space: &LabelSpace) -> u8 {
    match space.mode {
        LabelSpaceMode::Semantic4 => p.role.semantic_class(),
        LabelSpaceMode::Percube44 => p.cube_id,
    }
}

// Pixels between the ground line (world origin height) and the bottom edge.
const GROUND_MARGIN: f64 = 6.0;

/// Screen mapping anchored to the world origin, independent of the scene:
/// the origin always projects to the horizontal image center at a fixed
/// height above the bottom edge. Adding or removing cubes therefore never
/// shifts where the remaining cubes land, which is what the occlusion
/// invariants rely on.
struct Projection {
    scale: f64,
    origin: (f64, f64),
}

impl Projection {
    fn new(cfg: &RenderConfig) -> Self {
        Projection {
            scale: cfg.cube_px,
            origin: (
                cfg.image_size as f64 / 2.0 + SCREEN_NUDGE,
                cfg.image_size as f64 - GROUND_MARGIN + SCREEN_NUDGE,
            ),
        }
    }

    fn to_screen(&self, p: [f64; 3], right: [f64; 3], up: [f64; 3]) -> (f64, f64) {
        let u = dot(p, right);
        let v = dot(p, up);
        (self.origin.0 + u * self.scale, self.origin.1 - v * self.scale)
    }

    /// Image-plane (u, v) of a pixel center, the inverse of `to_screen`.
    /// The ray-cast oracle in the tests is the only consumer.
    #[cfg(test)]
    fn to_plane(&self, px: usize, py: usize) -> (f64, f64) {
        (
            (px as f64 + 0.5 - self.origin.0) / self.scale,
            (self.origin.1 - (py as f64 + 0.5)) / self.scale,
        )
    }
}

/// Checks that every cube lands inside the image with at least one pixel of
/// background border under the anchored projection.
fn check_fit(
    placements: &[CubePlacement],
    right: [f64; 3],
    up: [f64; 3],
    proj: &Projection,
    cfg: &RenderConfig,
) -> Result<(), SceneError> {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in placements {
        let (i, j, k) = p.grid_pos;
        for corner in 0..8 {
            let w = [
                f64::from(i + (corner & 1)),
                f64::from(j + ((corner >> 1) & 1)),
                f64::from(k + ((corner >> 2) & 1)),
            ];
            let (sx, sy) = proj.to_screen(w, right, up);
            x_min = x_min.min(sx);
            x_max = x_max.max(sx);
            y_min = y_min.min(sy);
            y_max = y_max.max(sy);
        }
    }
    let size = cfg.image_size as f64;
    if x_min < 1.0 || x_max > size - 1.0 || y_min < 1.0 || y_max > size - 1.0 {
        let half_w = (x_max - proj.origin.0).max(proj.origin.0 - x_min).max(0.0);
        let above = (proj.origin.1 - y_min).max(0.0);
        return Err(SceneError::ImageTooSmall {
            image_size: cfg.image_size,
            width_needed: (2.0 * half_w + 3.0).ceil() as usize,
            height_needed: (above + GROUND_MARGIN + 2.0).ceil() as usize,
        });
    }
    Ok(())
}

/// Renders one view of a cube scene as an RGB image and a class mask.
///
/// `placements` must come from a validated house (possibly stage-filtered or
/// knocked out); the scene must be non-empty and fit inside the image with a
/// one pixel background border.
pub fn render_view(
    placements: &[CubePlacement],
    angle_deg: u32,
    label_space: &LabelSpace,
    cfg: &RenderConfig,
) -> Result<RenderedView, SceneError> {
    if !VALID_ANGLES.contains(&angle_deg) {
        return Err(SceneError::InvalidAngle { angle_deg });
    }
    if placements.is_empty() {
        return Err(SceneError::EmptyScene);
    }
    if cfg.image_size < 16 || !(cfg.cube_px > 0.0) {
        return Err(SceneError::BadRenderConfig {
            reason: format!(
                "image_size {} and cube_px {} must be at least 16 and positive",
                cfg.image_size, cfg.cube_px
            ),
        });
    }

    let (right, up, dir) = camera_basis(angle_deg);
    let proj = Projection::new(cfg);
    check_fit(placements, right, up, &proj, cfg)?;
    let jitter = cube_jitter(cfg.palette_seed);

    let n = cfg.image_size;
    let mut image = Array3::from_elem((n, n, 3), 0u8);
    for py in 0..n {
        for px in 0..n {
            for c in 0..3 {
                image[(py, px, c)] = BACKGROUND_RGB[c];
            }
        }
    }
    let mut mask = Array2::zeros((n, n));
    let mut zbuf = vec![f64::INFINITY; n * n];

    for p in placements {
        let (i, j, k) = p.grid_pos;
        let cell = [f64::from(i), f64::from(j), f64::from(k)];
        let base = role_base_rgb(p.role);
        let jit = jitter[(p.cube_id - 1) as usize];
        let value = mask_value(p, label_space);
        debug_assert!((value as usize) < label_space.num_classes);

        for &(off, e1, e2, normal, shade) in &FACES {
            if dot(normal, dir) >= 0.0 {
                continue; // back-facing or edge-on
            }
            let c0 = add3(cell, off);
            let c1 = add3(c0, e1);
            let c2 = add3(c0, e2);
            let (x0, y0) = proj.to_screen(c0, right, up);
            let (x1, y1) = proj.to_screen(c1, right, up);
            let (x2, y2) = proj.to_screen(c2, right, up);
            let d0 = dot(c0, dir);
            let d1 = dot(c1, dir) - d0;
            let d2 = dot(c2, dir) - d0;
            let (ax, ay) = (x1 - x0, y1 - y0);
            let (bx, by) = (x2 - x0, y2 - y0);
            let det = ax * by - ay * bx;
            if det.abs() < 1e-12 {
                continue;
            }
            let inv = 1.0 / det;

            let (x3, y3) = (x0 + ax + bx, y0 + ay + by);
            let min_x = x0.min(x1).min(x2).min(x3);
            let max_x = x0.max(x1).max(x2).max(x3);
            let min_y = y0.min(y1).min(y2).min(y3);
            let max_y = y0.max(y1).max(y2).max(y3);
            let px_lo = (min_x - 0.5).floor().max(0.0) as usize;
            let px_hi = ((max_x - 0.5).ceil() as usize).min(n - 1);
            let py_lo = (min_y - 0.5).floor().max(0.0) as usize;
            let py_hi = ((max_y - 0.5).ceil() as usize).min(n - 1);

            let lum = shade * jit;
            let rgb = [
                (base[0] * lum).round().clamp(0.0, 255.0) as u8,
                (base[1] * lum).round().clamp(0.0, 255.0) as u8,
                (base[2] * lum).round().clamp(0.0, 255.0) as u8,
            ];

            for py in py_lo..=py_hi {
                let cy = py as f64 + 0.5 - y0;
                for px in px_lo..=px_hi {
                    let cx = px as f64 + 0.5 - x0;
                    let s = (cx * by - cy * bx) * inv;
                    let t = (ax * cy - ay * cx) * inv;
                    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
                        continue;
                    }
                    let depth = d0 + s * d1 + t * d2;
                    let zi = py * n + px;
                    if depth < zbuf[zi] {
                        zbuf[zi] = depth;
                        mask[(py, px)] = value;
                        image[(py, px, 0)] = rgb[0];
                        image[(py, px, 1)] = rgb[1];
                        image[(py, px, 2)] = rgb[2];
                    }
                }
            }
        }
    }

    Ok(RenderedView { image, mask })
}
