//! Raw forward/backward kernels on `(N, C, H, W)` tensors.
//!
//! Convolutions are lowered to GEMM through `im2col`/`col2im`. Everything is
//! single-threaded and allocation order is fixed, so results are bitwise
//! reproducible for identical inputs.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, ArrayView3, ArrayViewMut3, Axis};

use crate::Tensor;

pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

pub fn conv_t_out_dim(input: usize, k: usize, stride: usize, pad: usize, out_pad: usize) -> usize {
    (input - 1) * stride + k + out_pad - 2 * pad
}

/// Unfold `x` (C, H, W) into a (C*kh*kw, ho*wo) matrix. Out-of-bounds taps
/// read as zero.
pub fn im2col(
    x: &ArrayView3<f32>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Array2<f32> {
    let (c, h, w) = x.dim();
    let xs = x.as_slice().expect("standard layout");
    let mut col = Array2::<f32>::zeros((c * kh * kw, ho * wo));
    let cs = col.as_slice_mut().unwrap();
    for ci in 0..c {
        let xoff = ci * h * w;
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let roff = row * ho * wo;
                let kxp = kx as isize - pad as isize;
                // valid output columns: 0 <= ox*stride + kxp < w
                let ox_lo = if kxp >= 0 {
                    0
                } else {
                    ((-kxp) as usize).div_ceil(stride)
                };
                let ox_hi_num = w as isize - 1 - kxp;
                if ox_hi_num < 0 {
                    continue;
                }
                let ox_hi = (ox_hi_num as usize / stride).min(wo.saturating_sub(1));
                if ox_lo > ox_hi {
                    continue;
                }
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_base = xoff + iy as usize * w;
                    let dst = &mut cs[roff + oy * wo..roff + oy * wo + wo];
                    if stride == 1 {
                        let ix0 = (ox_lo as isize + kxp) as usize;
                        let len = ox_hi - ox_lo + 1;
                        dst[ox_lo..ox_lo + len]
                            .copy_from_slice(&xs[src_base + ix0..src_base + ix0 + len]);
                    } else {
                        for ox in ox_lo..=ox_hi {
                            let ix = (ox * stride) as isize + kxp;
                            dst[ox] = xs[src_base + ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Transpose of [`im2col`]: scatter-add a (C*kh*kw, ho*wo) matrix back onto a
/// (C, H, W) image. Taps falling outside the image are dropped.
pub fn col2im_add(
    col: &ArrayView2<f32>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    out: &mut ArrayViewMut3<f32>,
) {
    let (c, h, w) = out.dim();
    debug_assert_eq!(col.dim(), (c * kh * kw, ho * wo));
    let cs = col.as_slice().expect("standard layout");
    let os = out.as_slice_mut().unwrap();
    for ci in 0..c {
        let ooff = ci * h * w;
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (ci * kh + ky) * kw + kx;
                let roff = row * ho * wo;
                let kxp = kx as isize - pad as isize;
                let ox_lo = if kxp >= 0 {
                    0
                } else {
                    ((-kxp) as usize).div_ceil(stride)
                };
                let ox_hi_num = w as isize - 1 - kxp;
                if ox_hi_num < 0 {
                    continue;
                }
                let ox_hi = (ox_hi_num as usize / stride).min(wo.saturating_sub(1));
                if ox_lo > ox_hi {
                    continue;
                }
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_base = ooff + iy as usize * w;
                    let src = &cs[roff + oy * wo..roff + oy * wo + wo];
                    if stride == 1 {
                        let ix0 = (ox_lo as isize + kxp) as usize;
                        let d = &mut os[dst_base + ix0..dst_base + ix0 + (ox_hi - ox_lo + 1)];
                        for (dv, sv) in d.iter_mut().zip(&src[ox_lo..=ox_hi]) {
                            *dv += *sv;
                        }
                    } else {
                        for ox in ox_lo..=ox_hi {
                            let ix = (ox * stride) as isize + kxp;
                            os[dst_base + ix as usize] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

fn bias_slice(b: &Tensor) -> &[f32] {
    b.as_slice().expect("standard layout")
}

pub fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (n, cin, h, wd) = x.dim();
    let (cout, cin_w, kh, kw) = w.dim();
    assert_eq!(cin, cin_w, "conv2d channel mismatch");
    let ho = conv_out_dim(h, kh, stride, pad);
    let wo = conv_out_dim(wd, kw, stride, pad);
    let w_mat = w
        .view()
        .into_shape_with_order((cout, cin * kh * kw))
        .unwrap();
    let bs = bias_slice(b);
    let mut y = Tensor::zeros((n, cout, ho, wo));
    for i in 0..n {
        let col = im2col(&x.index_axis(Axis(0), i), kh, kw, stride, pad, ho, wo);
        let mut y_mat = y
            .index_axis_mut(Axis(0), i)
            .into_shape_with_order((cout, ho * wo))
            .unwrap();
        general_mat_mul(1.0, &w_mat, &col.view(), 0.0, &mut y_mat);
        for (mut row, &bv) in y_mat.outer_iter_mut().zip(bs.iter()) {
            row.mapv_inplace(|v| v + bv);
        }
    }
    y
}

pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_y: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (n, cin, _, _) = x.dim();
    let (cout, _, kh, kw) = w.dim();
    let (_, _, ho, wo) = grad_y.dim();
    let k = cin * kh * kw;
    let w_mat = w.view().into_shape_with_order((cout, k)).unwrap();
    let mut grad_x = Tensor::zeros(x.raw_dim());
    let mut grad_w = Tensor::zeros(w.raw_dim());
    let mut grad_b = Tensor::zeros((cout, 1, 1, 1));
    {
        let mut gw_mat = grad_w.view_mut().into_shape_with_order((cout, k)).unwrap();
        let gb = grad_b.as_slice_mut().unwrap();
        for i in 0..n {
            let col = im2col(&x.index_axis(Axis(0), i), kh, kw, stride, pad, ho, wo);
            let gy_mat = grad_y
                .index_axis(Axis(0), i)
                .into_shape_with_order((cout, ho * wo))
                .unwrap();
            general_mat_mul(1.0, &gy_mat, &col.t(), 1.0, &mut gw_mat);
            let mut gcol = Array2::<f32>::zeros((k, ho * wo));
            general_mat_mul(1.0, &w_mat.t(), &gy_mat, 0.0, &mut gcol);
            col2im_add(
                &gcol.view(),
                kh,
                kw,
                stride,
                pad,
                ho,
                wo,
                &mut grad_x.index_axis_mut(Axis(0), i),
            );
            for (c, row) in gy_mat.outer_iter().enumerate() {
                gb[c] += row.sum();
            }
        }
    }
    (grad_x, grad_w, grad_b)
}

/// Transposed convolution. Weights are laid out `(C_in, C_out, kh, kw)`.
pub fn conv_t2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Tensor {
    let (n, cin, h, wd) = x.dim();
    let (cin_w, cout, kh, kw) = w.dim();
    assert_eq!(cin, cin_w, "conv_t2d channel mismatch");
    assert!(out_pad < stride, "output padding must be < stride");
    let ho = conv_t_out_dim(h, kh, stride, pad, out_pad);
    let wo = conv_t_out_dim(wd, kw, stride, pad, out_pad);
    let w_mat = w
        .view()
        .into_shape_with_order((cin, cout * kh * kw))
        .unwrap();
    let bs = bias_slice(b);
    let mut y = Tensor::zeros((n, cout, ho, wo));
    for i in 0..n {
        let x_mat = x
            .index_axis(Axis(0), i)
            .into_shape_with_order((cin, h * wd))
            .unwrap();
        let mut col = Array2::<f32>::zeros((cout * kh * kw, h * wd));
        general_mat_mul(1.0, &w_mat.t(), &x_mat, 0.0, &mut col);
        let mut yi = y.index_axis_mut(Axis(0), i);
        col2im_add(&col.view(), kh, kw, stride, pad, h, wd, &mut yi);
        for (c, mut plane) in yi.outer_iter_mut().enumerate() {
            plane.mapv_inplace(|v| v + bs[c]);
        }
    }
    y
}

pub fn conv_t2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_y: &Tensor,
    stride: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (n, cin, h, wd) = x.dim();
    let (_, cout, kh, kw) = w.dim();
    let w_mat = w
        .view()
        .into_shape_with_order((cin, cout * kh * kw))
        .unwrap();
    let mut grad_x = Tensor::zeros(x.raw_dim());
    let mut grad_w = Tensor::zeros(w.raw_dim());
    let mut grad_b = Tensor::zeros((cout, 1, 1, 1));
    {
        let mut gw_mat = grad_w
            .view_mut()
            .into_shape_with_order((cin, cout * kh * kw))
            .unwrap();
        let gb = grad_b.as_slice_mut().unwrap();
        for i in 0..n {
            // dL/dcol gathers grad_y with the forward's scatter geometry.
            let gcol = im2col(&grad_y.index_axis(Axis(0), i), kh, kw, stride, pad, h, wd);
            let x_mat = x
                .index_axis(Axis(0), i)
                .into_shape_with_order((cin, h * wd))
                .unwrap();
            general_mat_mul(1.0, &x_mat, &gcol.t(), 1.0, &mut gw_mat);
            let mut gx_mat = grad_x
                .index_axis_mut(Axis(0), i)
                .into_shape_with_order((cin, h * wd))
                .unwrap();
            general_mat_mul(1.0, &w_mat, &gcol.view(), 0.0, &mut gx_mat);
            for (c, plane) in grad_y.index_axis(Axis(0), i).outer_iter().enumerate() {
                gb[c] += plane.sum();
            }
        }
    }
    (grad_x, grad_w, grad_b)
}

/// Max pooling; padding cells act as -inf. Returns the pooled map and the
/// flat `iy * W + ix` index of each window's winner for the backward pass.
pub fn maxpool_forward(
    x: &Tensor,
    k: usize,
    stride: usize,
    pad: usize,
) -> (Tensor, Vec<u32>) {
    let (n, c, h, w) = x.dim();
    let ho = conv_out_dim(h, k, stride, pad);
    let wo = conv_out_dim(w, k, stride, pad);
    let mut y = Tensor::zeros((n, c, ho, wo));
    let mut argmax = vec![0u32; n * c * ho * wo];
    let xs = x.as_slice().unwrap();
    let ys = y.as_slice_mut().unwrap();
    let mut oi = 0;
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0u32;
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = iy as usize * w + ix as usize;
                            let v = xs[base + idx];
                            if v > best {
                                best = v;
                                best_idx = idx as u32;
                            }
                        }
                    }
                    ys[oi] = best;
                    argmax[oi] = best_idx;
                    oi += 1;
                }
            }
        }
    }
    (y, argmax)
}

pub fn maxpool_backward(
    grad_y: &Tensor,
    argmax: &[u32],
    in_dim: (usize, usize, usize, usize),
) -> Tensor {
    let (n, c, h, w) = in_dim;
    let mut grad_x = Tensor::zeros(in_dim);
    let gxs = grad_x.as_slice_mut().unwrap();
    let gys = grad_y.as_slice().unwrap();
    let per_plane = grad_y.dim().2 * grad_y.dim().3;
    let mut oi = 0;
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * h * w;
            for _ in 0..per_plane {
                gxs[base + argmax[oi] as usize] += gys[oi];
                oi += 1;
            }
        }
    }
    grad_x
}

fn adaptive_bounds(len: usize, bins: usize) -> Vec<(usize, usize)> {
    (0..bins)
        .map(|i| (i * len / bins, ((i + 1) * len).div_ceil(bins)))
        .collect()
}

pub fn adaptive_avg_pool_forward(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (n, c, h, w) = x.dim();
    let yb = adaptive_bounds(h, oh);
    let xb = adaptive_bounds(w, ow);
    let mut y = Tensor::zeros((n, c, oh, ow));
    for i in 0..n {
        for ci in 0..c {
            let plane = x.index_axis(Axis(0), i);
            let plane = plane.index_axis(Axis(0), ci);
            for (oy, &(y0, y1)) in yb.iter().enumerate() {
                for (ox, &(x0, x1)) in xb.iter().enumerate() {
                    let mut sum = 0.0f32;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            sum += plane[(iy, ix)];
                        }
                    }
                    y[(i, ci, oy, ox)] = sum / ((y1 - y0) * (x1 - x0)) as f32;
                }
            }
        }
    }
    y
}

pub fn adaptive_avg_pool_backward(
    grad_y: &Tensor,
    in_dim: (usize, usize, usize, usize),
) -> Tensor {
    let (n, c, h, w) = in_dim;
    let (_, _, oh, ow) = grad_y.dim();
    let yb = adaptive_bounds(h, oh);
    let xb = adaptive_bounds(w, ow);
    let mut grad_x = Tensor::zeros(in_dim);
    for i in 0..n {
        for ci in 0..c {
            for (oy, &(y0, y1)) in yb.iter().enumerate() {
                for (ox, &(x0, x1)) in xb.iter().enumerate() {
                    let g = grad_y[(i, ci, oy, ox)] / ((y1 - y0) * (x1 - x0)) as f32;
                    for iy in y0..y1 {
                        for ix in x0..x1 {
                            grad_x[(i, ci, iy, ix)] += g;
                        }
                    }
                }
            }
        }
    }
    grad_x
}

/// Sampling tables for bilinear interpolation with half-pixel centers.
fn bilinear_table(out_len: usize, in_len: usize) -> Vec<(usize, usize, f32)> {
    (0..out_len)
        .map(|o| {
            let src = ((o as f32 + 0.5) * in_len as f32 / out_len as f32 - 0.5)
                .clamp(0.0, (in_len - 1) as f32);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f32)
        })
        .collect()
}

pub fn upsample_bilinear_forward(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (n, c, h, w) = x.dim();
    let ty = bilinear_table(oh, h);
    let tx = bilinear_table(ow, w);
    let mut y = Tensor::zeros((n, c, oh, ow));
    let xs = x.as_slice().unwrap();
    let ys = y.as_slice_mut().unwrap();
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * h * w;
            let obase = (i * c + ci) * oh * ow;
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let r0 = base + y0 * w;
                let r1 = base + y1 * w;
                let orow = obase + oy * ow;
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = xs[r0 + x0] * (1.0 - fx) + xs[r0 + x1] * fx;
                    let bot = xs[r1 + x0] * (1.0 - fx) + xs[r1 + x1] * fx;
                    ys[orow + ox] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    y
}

pub fn upsample_bilinear_backward(
    grad_y: &Tensor,
    in_dim: (usize, usize, usize, usize),
) -> Tensor {
    let (n, c, h, w) = in_dim;
    let (_, _, oh, ow) = grad_y.dim();
    let ty = bilinear_table(oh, h);
    let tx = bilinear_table(ow, w);
    let mut grad_x = Tensor::zeros(in_dim);
    let gxs = grad_x.as_slice_mut().unwrap();
    let gys = grad_y.as_slice().unwrap();
    for i in 0..n {
        for ci in 0..c {
            let base = (i * c + ci) * h * w;
            let obase = (i * c + ci) * oh * ow;
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let r0 = base + y0 * w;
                let r1 = base + y1 * w;
                let orow = obase + oy * ow;
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let g = gys[orow + ox];
                    gxs[r0 + x0] += g * (1.0 - fx) * (1.0 - fy);
                    gxs[r0 + x1] += g * fx * (1.0 - fy);
                    gxs[r1 + x0] += g * (1.0 - fx) * fy;
                    gxs[r1 + x1] += g * fx * fy;
                }
            }
        }
    }
    grad_x
}

/// Per-channel batch statistics over the `(N, H, W)` axes; variance is biased.
pub fn batch_stats(x: &Tensor) -> (Array1<f32>, Array1<f32>) {
    let (n, c, h, w) = x.dim();
    let count = (n * h * w) as f64;
    let mut mean = Array1::<f32>::zeros(c);
    let mut var = Array1::<f32>::zeros(c);
    for ci in 0..c {
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for i in 0..n {
            let plane = x.index_axis(Axis(0), i);
            let plane = plane.index_axis(Axis(0), ci);
            for &v in plane.as_slice().unwrap() {
                sum += v as f64;
                sumsq += (v as f64) * (v as f64);
            }
        }
        let m = sum / count;
        mean[ci] = m as f32;
        var[ci] = ((sumsq / count) - m * m).max(0.0) as f32;
    }
    (mean, var)
}

pub fn batchnorm_apply(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Array1<f32>,
    var: &Array1<f32>,
    eps: f32,
) -> Tensor {
    let (n, c, h, w) = x.dim();
    let gs = gamma.as_slice().unwrap();
    let bs = beta.as_slice().unwrap();
    let mut y = Tensor::zeros((n, c, h, w));
    let xs = x.as_slice().unwrap();
    let ys = y.as_slice_mut().unwrap();
    let plane = h * w;
    for i in 0..n {
        for ci in 0..c {
            let scale = gs[ci] / (var[ci] + eps).sqrt();
            let shift = bs[ci] - mean[ci] * scale;
            let off = (i * c + ci) * plane;
            for j in 0..plane {
                ys[off + j] = xs[off + j] * scale + shift;
            }
        }
    }
    y
}

pub fn batchnorm_backward(
    x: &Tensor,
    gamma: &Tensor,
    mean: &Array1<f32>,
    var: &Array1<f32>,
    eps: f32,
    grad_y: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, h, w) = x.dim();
    let plane = h * w;
    let count = (n * plane) as f64;
    let gs = gamma.as_slice().unwrap();
    let xs = x.as_slice().unwrap();
    let gys = grad_y.as_slice().unwrap();
    let mut grad_x = Tensor::zeros((n, c, h, w));
    let mut grad_gamma = Tensor::zeros((c, 1, 1, 1));
    let mut grad_beta = Tensor::zeros((c, 1, 1, 1));
    let gxs = grad_x.as_slice_mut().unwrap();
    for ci in 0..c {
        let inv_std = 1.0 / (var[ci] + eps).sqrt();
        let m = mean[ci];
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64; // sum of g * x_hat
        for i in 0..n {
            let off = (i * c + ci) * plane;
            for j in 0..plane {
                let g = gys[off + j] as f64;
                let xh = ((xs[off + j] - m) * inv_std) as f64;
                sum_g += g;
                sum_gx += g * xh;
            }
        }
        grad_beta[(ci, 0, 0, 0)] = sum_g as f32;
        grad_gamma[(ci, 0, 0, 0)] = sum_gx as f32;
        let mean_g = (sum_g / count) as f32;
        let mean_gx = (sum_gx / count) as f32;
        let scale = gs[ci] * inv_std;
        for i in 0..n {
            let off = (i * c + ci) * plane;
            for j in 0..plane {
                let xh = (xs[off + j] - m) * inv_std;
                gxs[off + j] = scale * (gys[off + j] - mean_g - xh * mean_gx);
            }
        }
    }
    (grad_x, grad_gamma, grad_beta)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad_y: &Tensor) -> Tensor {
    let mut g = grad_y.clone();
    g.zip_mut_with(x, |gv, &xv| {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

/// Softmax across the channel axis.
pub fn softmax_channels(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.dim();
    let plane = h * w;
    let xs = x.as_slice().unwrap();
    let mut y = Tensor::zeros((n, c, h, w));
    let ys = y.as_slice_mut().unwrap();
    for i in 0..n {
        let base = i * c * plane;
        for j in 0..plane {
            let mut maxv = f32::NEG_INFINITY;
            for ci in 0..c {
                maxv = maxv.max(xs[base + ci * plane + j]);
            }
            let mut sum = 0.0f32;
            for ci in 0..c {
                let e = (xs[base + ci * plane + j] - maxv).exp();
                ys[base + ci * plane + j] = e;
                sum += e;
            }
            let inv = 1.0 / sum;
            for ci in 0..c {
                ys[base + ci * plane + j] *= inv;
            }
        }
    }
    y
}

pub fn softmax_backward(y: &Tensor, grad_y: &Tensor) -> Tensor {
    let (n, c, h, w) = y.dim();
    let plane = h * w;
    let ys = y.as_slice().unwrap();
    let gys = grad_y.as_slice().unwrap();
    let mut gx = Tensor::zeros((n, c, h, w));
    let gxs = gx.as_slice_mut().unwrap();
    for i in 0..n {
        let base = i * c * plane;
        for j in 0..plane {
            let mut dot = 0.0f32;
            for ci in 0..c {
                let k = base + ci * plane + j;
                dot += gys[k] * ys[k];
            }
            for ci in 0..c {
                let k = base + ci * plane + j;
                gxs[k] = ys[k] * (gys[k] - dot);
            }
        }
    }
    gx
}

pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
    assert!(!parts.is_empty());
    let (n, _, h, w) = parts[0].dim();
    let c_total: usize = parts.iter().map(|p| p.dim().1).sum();
    let mut y = Tensor::zeros((n, c_total, h, w));
    let mut c0 = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dim();
        assert_eq!((pn, ph, pw), (n, h, w), "concat spatial mismatch");
        y.slice_mut(ndarray::s![.., c0..c0 + pc, .., ..]).assign(p);
        c0 += pc;
    }
    y
}

pub fn split_channels(grad: &Tensor, sizes: &[usize]) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut c0 = 0;
    for &cs in sizes {
        out.push(grad.slice(ndarray::s![.., c0..c0 + cs, .., ..]).to_owned());
        c0 += cs;
    }
    out
}
