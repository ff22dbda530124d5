//! Categorical cross-entropy over per-pixel class probabilities.

use crate::Tensor;

/// Probabilities below this are clamped inside the log; matches the usual
/// backend epsilon for categorical cross-entropy on probability inputs.
pub const PROB_EPSILON: f32 = 1e-7;

/// Mean per-pixel cross-entropy between predicted probabilities and a
/// one-hot target of the same shape. Returns the loss (accumulated in f64)
/// and its gradient with respect to the probabilities.
///
/// Where a probability sits below [`PROB_EPSILON`] the clamp is active and
/// the gradient is zero. A non-finite probability under a target makes the
/// loss NaN rather than silently clamping, so divergence stays observable.
pub fn cross_entropy(probs: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert_eq!(probs.dim(), target.dim(), "loss shape mismatch");
    let (n, _, h, w) = probs.dim();
    let npix = (n * h * w) as f64;
    let mut loss = 0.0f64;
    let mut diverged = false;
    let mut grad = Tensor::zeros(probs.raw_dim());
    let ps = probs.as_slice().unwrap();
    let ts = target.as_slice().unwrap();
    let gs = grad.as_slice_mut().unwrap();
    let inv = 1.0 / npix;
    for i in 0..ps.len() {
        let t = ts[i];
        if t == 0.0 {
            continue;
        }
        let p = ps[i];
        if p >= PROB_EPSILON {
            loss -= t as f64 * (p as f64).ln();
            gs[i] = -(t / p) * inv as f32;
        } else {
            loss -= t as f64 * (PROB_EPSILON as f64).ln();
            diverged |= !p.is_finite();
        }
    }
    if diverged {
        loss = f64::NAN;
    }
    (loss / npix, grad)
}
