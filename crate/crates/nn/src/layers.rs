//! Layer builders: each registers its parameters under a dotted name prefix
//! and exposes a `forward` that appends to a [`Tape`].

use rand_chacha::ChaCha8Rng;

use crate::graph::{NodeId, Tape};
use crate::init::he_uniform;
use crate::params::{BufferId, ParamId, ParamStore};
use crate::Tensor;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.1;

#[derive(Clone, Copy)]
pub struct Conv2d {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let w = store.add_param(
            format!("{name}.weight"),
            he_uniform(rng, (cout, cin, k, k), cin * k * k),
        );
        let b = store.add_param(format!("{name}.bias"), Tensor::zeros((cout, 1, 1, 1)));
        Conv2d { w, b, stride, pad }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        tape.conv2d(x, self.w, self.b, self.stride, self.pad)
    }
}

/// Transposed convolution; weights are `(C_in, C_out, k, k)` and fan-in for
/// initialization counts the forward taps `cin * k * k`.
#[derive(Clone, Copy)]
pub struct ConvT2d {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
    out_pad: usize,
}

impl ConvT2d {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Self {
        let w = store.add_param(
            format!("{name}.weight"),
            he_uniform(rng, (cin, cout, k, k), cin * k * k),
        );
        let b = store.add_param(format!("{name}.bias"), Tensor::zeros((cout, 1, 1, 1)));
        ConvT2d {
            w,
            b,
            stride,
            pad,
            out_pad,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        tape.conv_t2d(x, self.w, self.b, self.stride, self.pad, self.out_pad)
    }
}

#[derive(Clone, Copy)]
pub struct BatchNorm2d {
    gamma: ParamId,
    beta: ParamId,
    running_mean: BufferId,
    running_var: BufferId,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, c: usize) -> Self {
        let gamma = store.add_param(format!("{name}.gamma"), Tensor::from_elem((c, 1, 1, 1), 1.0));
        let beta = store.add_param(format!("{name}.beta"), Tensor::zeros((c, 1, 1, 1)));
        let running_mean =
            store.add_buffer(format!("{name}.running_mean"), Tensor::zeros((c, 1, 1, 1)));
        let running_var = store.add_buffer(
            format!("{name}.running_var"),
            Tensor::from_elem((c, 1, 1, 1), 1.0),
        );
        BatchNorm2d {
            gamma,
            beta,
            running_mean,
            running_var,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        tape.batchnorm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            BN_EPS,
            BN_MOMENTUM,
        )
    }
}
