//! The eight augmentations the dataset pipeline supports. Photometric ops
//! (CLAHE, blur, hue/saturation/value) touch only the image; geometric ops
//! warp image and mask with one shared inverse mapping, sampling the image
//! bilinearly and the mask nearest-neighbor. Out-of-range samples reflect at
//! the borders (without repeating the edge row), so warps can never invent
//! pixel values that were absent from the input.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DataError;
use crate::scenegen::RenderedView;
use crate::{Mask, RgbImage};

/// Canonical op identifiers, photometric and geometric ops interleaved in
/// their standard pipeline order.
pub const AUGMENTATION_OPS: [&str; 8] = [
    "clahe",
    "random_rotate90",
    "transpose",
    "shift_scale_rotate",
    "blur",
    "optical_distortion",
    "grid_distortion",
    "hue_saturation_value",
];

// Parameter ranges, following the common defaults for this augmentation
// suite. Documented in the project README.
const CLAHE_TILES: usize = 8;
const CLAHE_CLIP: (f64, f64) = (1.0, 4.0);
const SHIFT_LIMIT: f64 = 0.0625;
const SCALE_LIMIT: f64 = 0.10;
const ROTATE_LIMIT_DEG: f64 = 45.0;
const BLUR_KERNELS: [usize; 3] = [3, 5, 7];
const OPTICAL_DISTORT_LIMIT: f64 = 0.05;
const GRID_STEPS: usize = 5;
const GRID_DISTORT_LIMIT: f64 = 0.30;
const HUE_SHIFT_LIMIT: f64 = 20.0;
const SAT_SHIFT_LIMIT: f64 = 30.0;
const VAL_SHIFT_LIMIT: f64 = 20.0;

// Probability that an op listed in the pipeline fires on a given sample.
const OP_PROBABILITY: f64 = 0.5;

/// Applies the listed ops in order, each firing with probability 1/2 and
/// drawing its parameters from the seeded stream. The input is untouched;
/// determinism in `rng_seed` is part of the contract.
pub fn augment(
    sample: &RenderedView,
    ops: &[String],
    rng_seed: u64,
) -> Result<RenderedView, DataError> {
    for op in ops {
        if !AUGMENTATION_OPS.contains(&op.as_str()) {
            return Err(DataError::UnknownAugmentation { name: op.clone() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut image = sample.image.clone();
    let mut mask = sample.mask.clone();
    for op in ops {
        if !rng.random_bool(OP_PROBABILITY) {
            continue; // skipped ops draw no parameters
        }
        match op.as_str() {
            "clahe" => {
                let clip = rng.random_range(CLAHE_CLIP.0..CLAHE_CLIP.1);
                image = clahe(&image, clip);
            }
            "random_rotate90" => {
                let k = rng.random_range(0..4u32);
                image = rotate90_image(&image, k);
                mask = rotate90_mask(&mask, k);
            }
            "transpose" => {
                let (h, w, _) = image.dim();
                image = Array3::from_shape_fn((w, h, 3), |(y, x, c)| image[(x, y, c)]);
                mask = Array2::from_shape_fn((w, h), |(y, x)| mask[(x, y)]);
            }
            "shift_scale_rotate" => {
                let shift_x = rng.random_range(-SHIFT_LIMIT..SHIFT_LIMIT);
                let shift_y = rng.random_range(-SHIFT_LIMIT..SHIFT_LIMIT);
                let scale = 1.0 + rng.random_range(-SCALE_LIMIT..SCALE_LIMIT);
                let angle = rng.random_range(-ROTATE_LIMIT_DEG..ROTATE_LIMIT_DEG).to_radians();
                let (h, w) = mask.dim();
                let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
                let (sin, cos) = angle.sin_cos();
                let (ty, tx) = (shift_y * h as f64, shift_x * w as f64);
                let map = move |y: f64, x: f64| {
                    // inverse transform: undo shift, then rotation, then scale
                    let dy = y - cy - ty;
                    let dx = x - cx - tx;
                    let ry = (-sin).mul_add(dx, cos * dy) / scale;
                    let rx = sin.mul_add(dy, cos * dx) / scale;
                    (cy + ry, cx + rx)
                };
                let warped = warp(&image, &mask, map);
                image = warped.0;
                mask = warped.1;
            }
            "blur" => {
                let k = BLUR_KERNELS[rng.random_range(0..BLUR_KERNELS.len())];
                image = box_blur(&image, k);
            }
            "optical_distortion" => {
                let k = rng.random_range(-OPTICAL_DISTORT_LIMIT..OPTICAL_DISTORT_LIMIT);
                let (h, w) = mask.dim();
                let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
                let map = move |y: f64, x: f64| {
                    let ny = (y - cy) / cy.max(1.0);
                    let nx = (x - cx) / cx.max(1.0);
                    let factor = 1.0 + k * (nx * nx + ny * ny);
                    (cy + (y - cy) * factor, cx + (x - cx) * factor)
                };
                let warped = warp(&image, &mask, map);
                image = warped.0;
                mask = warped.1;
            }
            "grid_distortion" => {
                let (h, w) = mask.dim();
                let map_y = grid_axis_map(&mut rng, h);
                let map_x = grid_axis_map(&mut rng, w);
                let map = move |y: f64, x: f64| (interp_knots(&map_y, y), interp_knots(&map_x, x));
                let warped = warp(&image, &mask, map);
                image = warped.0;
                mask = warped.1;
            }
            "hue_saturation_value" => {
                let dh = rng.random_range(-HUE_SHIFT_LIMIT..HUE_SHIFT_LIMIT);
                let ds = rng.random_range(-SAT_SHIFT_LIMIT..SAT_SHIFT_LIMIT);
                let dv = rng.random_range(-VAL_SHIFT_LIMIT..VAL_SHIFT_LIMIT);
                image = hsv_shift(&image, dh, ds, dv);
            }
            _ => unreachable!("validated above"),
        }
    }
    Ok(RenderedView { image, mask })
}

/// Reflect-101 index folding: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
fn reflect101(i: i64, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as i64 {
        m = period - m;
    }
    m as usize
}

fn bilinear_reflect(image: &RgbImage, y: f64, x: f64, c: usize) -> u8 {
    let (h, w, _) = image.dim();
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let sample = |dy: i64, dx: i64| -> f64 {
        let iy = reflect101(y0 as i64 + dy, h);
        let ix = reflect101(x0 as i64 + dx, w);
        f64::from(image[(iy, ix, c)])
    };
    let v = sample(0, 0) * (1.0 - fy) * (1.0 - fx)
        + sample(0, 1) * (1.0 - fy) * fx
        + sample(1, 0) * fy * (1.0 - fx)
        + sample(1, 1) * fy * fx;
    v.round().clamp(0.0, 255.0) as u8
}

fn nearest_reflect(mask: &Mask, y: f64, x: f64) -> u8 {
    let (h, w) = mask.dim();
    let iy = reflect101(y.round() as i64, h);
    let ix = reflect101(x.round() as i64, w);
    mask[(iy, ix)]
}

/// Warps image and mask through the same output-to-input coordinate map.
fn warp(
    image: &RgbImage,
    mask: &Mask,
    map: impl Fn(f64, f64) -> (f64, f64),
) -> (RgbImage, Mask) {
    let (h, w, _) = image.dim();
    let mut out_image = Array3::zeros((h, w, 3));
    let mut out_mask = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = map(y as f64, x as f64);
            for c in 0..3 {
                out_image[(y, x, c)] = bilinear_reflect(image, sy, sx, c);
            }
            out_mask[(y, x)] = nearest_reflect(mask, sy, sx);
        }
    }
    (out_image, out_mask)
}

fn rotate90_image(image: &RgbImage, k: u32) -> RgbImage {
    let (h, w, _) = image.dim();
    match k % 4 {
        0 => image.clone(),
        1 => Array3::from_shape_fn((w, h, 3), |(y, x, c)| image[(x, w - 1 - y, c)]),
        2 => Array3::from_shape_fn((h, w, 3), |(y, x, c)| image[(h - 1 - y, w - 1 - x, c)]),
        _ => Array3::from_shape_fn((w, h, 3), |(y, x, c)| image[(h - 1 - x, y, c)]),
    }
}

fn rotate90_mask(mask: &Mask, k: u32) -> Mask {
    let (h, w) = mask.dim();
    match k % 4 {
        0 => mask.clone(),
        1 => Array2::from_shape_fn((w, h), |(y, x)| mask[(x, w - 1 - y)]),
        2 => Array2::from_shape_fn((h, w), |(y, x)| mask[(h - 1 - y, w - 1 - x)]),
        _ => Array2::from_shape_fn((w, h), |(y, x)| mask[(h - 1 - x, y)]),
    }
}

/// Knots of a monotone piecewise-linear axis remap for grid distortion:
/// output knot positions are uniform, source positions accumulate randomly
/// stretched segment lengths renormalized to the axis length.
fn grid_axis_map(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    let mut lens = Vec::with_capacity(GRID_STEPS);
    for _ in 0..GRID_STEPS {
        lens.push(1.0 + rng.random_range(-GRID_DISTORT_LIMIT..GRID_DISTORT_LIMIT));
    }
    let total: f64 = lens.iter().sum();
    let span = (n as f64 - 1.0).max(1.0);
    let mut knots = Vec::with_capacity(GRID_STEPS + 1);
    let mut acc = 0.0;
    knots.push((0.0, 0.0));
    for (i, len) in lens.iter().enumerate() {
        acc += len / total * span;
        let dst = (i + 1) as f64 / GRID_STEPS as f64 * span;
        knots.push((dst, acc));
    }
    knots
}

fn interp_knots(knots: &[(f64, f64)], v: f64) -> f64 {
    for pair in knots.windows(2) {
        let (d0, s0) = pair[0];
        let (d1, s1) = pair[1];
        if v <= d1 {
            if d1 - d0 < 1e-12 {
                return s0;
            }
            let t = ((v - d0) / (d1 - d0)).clamp(0.0, 1.0);
            return s0 + t * (s1 - s0);
        }
    }
    knots.last().expect("at least one knot").1
}

fn box_blur(image: &RgbImage, k: usize) -> RgbImage {
    let (h, w, _) = image.dim();
    let r = (k / 2) as i64;
    let norm = (k * k) as f64;
    let mut tmp = Array3::<f64>::zeros((h, w, 3));
    // horizontal pass
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut s = 0.0;
                for d in -r..=r {
                    s += f64::from(image[(y, reflect101(x as i64 + d, w), c)]);
                }
                tmp[(y, x, c)] = s;
            }
        }
    }
    // vertical pass
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let mut s = 0.0;
        for d in -r..=r {
            s += tmp[(reflect101(y as i64 + d, h), x, c)];
        }
        (s / norm).round().clamp(0.0, 255.0) as u8
    })
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / d).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Hue shift in degrees, saturation and value shifts in 8-bit units.
fn hsv_shift(image: &RgbImage, dh: f64, ds: f64, dv: f64) -> RgbImage {
    let (h, w, _) = image.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let r = f64::from(image[(y, x, 0)]) / 255.0;
        let g = f64::from(image[(y, x, 1)]) / 255.0;
        let b = f64::from(image[(y, x, 2)]) / 255.0;
        let (hue, sat, val) = rgb_to_hsv(r, g, b);
        let hue = hue + dh;
        let sat = (sat + ds / 255.0).clamp(0.0, 1.0);
        let val = (val + dv / 255.0).clamp(0.0, 1.0);
        let rgb = hsv_to_rgb(hue, sat, val);
        let v = [rgb.0, rgb.1, rgb.2][c];
        (v * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

/// Contrast-limited adaptive histogram equalization on the luma channel,
/// with the per-pixel gain reapplied to all three channels.
fn clahe(image: &RgbImage, clip: f64) -> RgbImage {
    let (h, w, _) = image.dim();
    let luma = Array2::from_shape_fn((h, w), |(y, x)| {
        let r = f64::from(image[(y, x, 0)]);
        let g = f64::from(image[(y, x, 1)]);
        let b = f64::from(image[(y, x, 2)]);
        (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
    });

    let tiles = CLAHE_TILES;
    let tile_h = h.div_ceil(tiles);
    let tile_w = w.div_ceil(tiles);
    let ty_count = h.div_ceil(tile_h);
    let tx_count = w.div_ceil(tile_w);

    // one equalization LUT per tile
    let mut luts = vec![[0u8; 256]; ty_count * tx_count];
    for ty in 0..ty_count {
        for tx in 0..tx_count {
            let y0 = ty * tile_h;
            let x0 = tx * tile_w;
            let y1 = (y0 + tile_h).min(h);
            let x1 = (x0 + tile_w).min(w);
            let area = (y1 - y0) * (x1 - x0);
            let mut hist = [0usize; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[luma[(y, x)] as usize] += 1;
                }
            }
            let limit = ((clip * area as f64 / 256.0) as usize).max(1);
            let mut excess = 0;
            for bin in hist.iter_mut() {
                if *bin > limit {
                    excess += *bin - limit;
                    *bin = limit;
                }
            }
            let bump = excess / 256;
            let rem = excess % 256;
            for (i, bin) in hist.iter_mut().enumerate() {
                *bin += bump + usize::from(i < rem);
            }
            let lut = &mut luts[ty * tx_count + tx];
            let mut cdf = 0usize;
            for v in 0..256 {
                cdf += hist[v];
                lut[v] = ((cdf as f64 / area as f64) * 255.0).round() as u8;
            }
        }
    }

    // bilinear blend of the four surrounding tile LUTs
    let equalized = Array2::from_shape_fn((h, w), |(y, x)| {
        let fy = (y as f64 - tile_h as f64 / 2.0) / tile_h as f64;
        let fx = (x as f64 - tile_w as f64 / 2.0) / tile_w as f64;
        let ty0 = fy.floor().max(0.0) as usize;
        let tx0 = fx.floor().max(0.0) as usize;
        let ty1 = (ty0 + 1).min(ty_count - 1);
        let tx1 = (tx0 + 1).min(tx_count - 1);
        let wy = (fy - fy.floor()).clamp(0.0, 1.0);
        let wx = (fx - fx.floor()).clamp(0.0, 1.0);
        let v = luma[(y, x)] as usize;
        let blend = f64::from(luts[ty0 * tx_count + tx0][v]) * (1.0 - wy) * (1.0 - wx)
            + f64::from(luts[ty0 * tx_count + tx1][v]) * (1.0 - wy) * wx
            + f64::from(luts[ty1 * tx_count + tx0][v]) * wy * (1.0 - wx)
            + f64::from(luts[ty1 * tx_count + tx1][v]) * wy * wx;
        blend.round().clamp(0.0, 255.0) as u8
    });

    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let gain = f64::from(equalized[(y, x)]) / f64::from(luma[(y, x)]).max(1.0);
        (f64::from(image[(y, x, c)]) * gain).round().clamp(0.0, 255.0) as u8
    })
}
