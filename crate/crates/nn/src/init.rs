//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Tensor;

/// He (Kaiming) uniform initialization: samples from
/// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`. Values are drawn in row-major
/// order so a given seed always produces the same tensor.
pub fn he_uniform(
    rng: &mut ChaCha8Rng,
    dim: (usize, usize, usize, usize),
    fan_in: usize,
) -> Tensor {
    assert!(fan_in > 0, "fan_in must be positive");
    let limit = (6.0 / fan_in as f32).sqrt();
    let n = dim.0 * dim.1 * dim.2 * dim.3;
    let mut vals = Vec::with_capacity(n);
    for _ in 0..n {
        vals.push(rng.random_range(-limit..limit));
    }
    Tensor::from_shape_vec(dim, vals).unwrap()
}
