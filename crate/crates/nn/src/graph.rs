//! Dynamic computation tape with reverse-mode differentiation.
//!
//! A [`Tape`] records one forward pass as a flat list of nodes; `backward`
//! walks the list in reverse and accumulates parameter gradients into the
//! [`ParamStore`]. Tapes are cheap and rebuilt every step.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ops;
use crate::params::{BufferId, ParamId, ParamStore};
use crate::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

enum Op {
    Input,
    Conv2d {
        x: NodeId,
        w: ParamId,
        b: ParamId,
        stride: usize,
        pad: usize,
    },
    ConvT2d {
        x: NodeId,
        w: ParamId,
        b: ParamId,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        mean: Array1<f32>,
        var: Array1<f32>,
        eps: f32,
        train: bool,
    },
    Relu {
        x: NodeId,
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<u32>,
    },
    AdaptiveAvgPool {
        x: NodeId,
    },
    UpsampleBilinear {
        x: NodeId,
    },
    Dropout {
        x: NodeId,
        mask: Option<Tensor>,
    },
    Concat {
        xs: Vec<NodeId>,
        sizes: Vec<usize>,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Softmax {
        x: NodeId,
    },
}

pub struct Tape<'a> {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    store: &'a mut ParamStore,
    mode: Mode,
    rng: &'a mut ChaCha8Rng,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a mut ParamStore, mode: Mode, rng: &'a mut ChaCha8Rng) -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            store,
            mode,
            rng,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.values.len());
        self.values.push(value);
        self.ops.push(op);
        id
    }

    pub fn input(&mut self, x: Tensor) -> NodeId {
        self.push(x, Op::Input)
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: ParamId,
        b: ParamId,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let y = ops::conv2d_forward(
            &self.values[x.0],
            self.store.value(w),
            self.store.value(b),
            stride,
            pad,
        );
        self.push(y, Op::Conv2d { x, w, b, stride, pad })
    }

    pub fn conv_t2d(
        &mut self,
        x: NodeId,
        w: ParamId,
        b: ParamId,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> NodeId {
        let y = ops::conv_t2d_forward(
            &self.values[x.0],
            self.store.value(w),
            self.store.value(b),
            stride,
            pad,
            out_pad,
        );
        self.push(y, Op::ConvT2d { x, w, b, stride, pad })
    }

    /// Batch normalization. Train mode normalizes with batch statistics and
    /// folds them into the running buffers; eval mode uses the buffers.
    pub fn batchnorm(
        &mut self,
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        running_mean: BufferId,
        running_var: BufferId,
        eps: f32,
        momentum: f32,
    ) -> NodeId {
        let train = self.mode == Mode::Train;
        let (mean, var) = if train {
            let (mean, var) = ops::batch_stats(&self.values[x.0]);
            let (n, _, h, w) = self.values[x.0].dim();
            let count = (n * h * w) as f32;
            // running variance keeps the unbiased estimate
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let rm = self.store.buffer_mut(running_mean);
            for (ci, &m) in mean.iter().enumerate() {
                rm[(ci, 0, 0, 0)] = (1.0 - momentum) * rm[(ci, 0, 0, 0)] + momentum * m;
            }
            let rv = self.store.buffer_mut(running_var);
            for (ci, &v) in var.iter().enumerate() {
                rv[(ci, 0, 0, 0)] = (1.0 - momentum) * rv[(ci, 0, 0, 0)] + momentum * v * unbias;
            }
            (mean, var)
        } else {
            let c = self.values[x.0].dim().1;
            let rm = self.store.buffer(running_mean);
            let rv = self.store.buffer(running_var);
            (
                Array1::from_shape_fn(c, |ci| rm[(ci, 0, 0, 0)]),
                Array1::from_shape_fn(c, |ci| rv[(ci, 0, 0, 0)]),
            )
        };
        let y = ops::batchnorm_apply(
            &self.values[x.0],
            self.store.value(gamma),
            self.store.value(beta),
            &mean,
            &var,
            eps,
        );
        self.push(
            y,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                var,
                eps,
                train,
            },
        )
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = ops::relu_forward(&self.values[x.0]);
        self.push(y, Op::Relu { x })
    }

    pub fn maxpool(&mut self, x: NodeId, k: usize, stride: usize, pad: usize) -> NodeId {
        let (y, argmax) = ops::maxpool_forward(&self.values[x.0], k, stride, pad);
        self.push(y, Op::MaxPool { x, argmax })
    }

    pub fn adaptive_avg_pool(&mut self, x: NodeId, oh: usize, ow: usize) -> NodeId {
        let y = ops::adaptive_avg_pool_forward(&self.values[x.0], oh, ow);
        self.push(y, Op::AdaptiveAvgPool { x })
    }

    pub fn upsample_bilinear(&mut self, x: NodeId, oh: usize, ow: usize) -> NodeId {
        let y = ops::upsample_bilinear_forward(&self.values[x.0], oh, ow);
        self.push(y, Op::UpsampleBilinear { x })
    }

    /// Inverted dropout: surviving activations are scaled by `1/(1-rate)` so
    /// eval mode is the identity.
    pub fn dropout(&mut self, x: NodeId, rate: f32) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if self.mode == Mode::Eval || rate == 0.0 {
            let y = self.values[x.0].clone();
            return self.push(y, Op::Dropout { x, mask: None });
        }
        let keep_inv = 1.0 / (1.0 - rate);
        let dim = self.values[x.0].raw_dim();
        let n = self.values[x.0].len();
        let mut mask_vec = Vec::with_capacity(n);
        for _ in 0..n {
            let keep = self.rng.random::<f32>() >= rate;
            mask_vec.push(if keep { keep_inv } else { 0.0 });
        }
        let mask = Tensor::from_shape_vec(dim, mask_vec).unwrap();
        let y = &self.values[x.0] * &mask;
        self.push(y, Op::Dropout { x, mask: Some(mask) })
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let parts: Vec<&Tensor> = xs.iter().map(|id| &self.values[id.0]).collect();
        let sizes: Vec<usize> = parts.iter().map(|p| p.dim().1).collect();
        let y = ops::concat_channels(&parts);
        self.push(
            y,
            Op::Concat {
                xs: xs.to_vec(),
                sizes,
            },
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(
            self.values[a.0].dim(),
            self.values[b.0].dim(),
            "add shape mismatch"
        );
        let y = &self.values[a.0] + &self.values[b.0];
        self.push(y, Op::Add { a, b })
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let y = ops::softmax_channels(&self.values[x.0]);
        self.push(y, Op::Softmax { x })
    }

    /// Runs reverse-mode accumulation from `root`, seeded with `dL/d(root)`.
    /// Parameter gradients are added to the store (call `zero_grads` first
    /// for a fresh step).
    pub fn backward(&mut self, root: NodeId, seed: Tensor) {
        assert_eq!(
            seed.dim(),
            self.values[root.0].dim(),
            "seed gradient shape mismatch"
        );
        let values = &self.values;
        let ops_list = &self.ops;
        let store = &mut *self.store;
        let mut grads: Vec<Option<Tensor>> = (0..values.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);

        fn acc(slot: &mut Option<Tensor>, delta: Tensor) {
            match slot {
                None => *slot = Some(delta),
                Some(t) => *t += &delta,
            }
        }

        for i in (0..values.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &ops_list[i] {
                Op::Input => {}
                Op::Conv2d { x, w, b, stride, pad } => {
                    let (gx, gw, gb) =
                        ops::conv2d_backward(&values[x.0], store.value(*w), &g, *stride, *pad);
                    store.accumulate_grad(*w, &gw);
                    store.accumulate_grad(*b, &gb);
                    acc(&mut grads[x.0], gx);
                }
                Op::ConvT2d { x, w, b, stride, pad } => {
                    let (gx, gw, gb) =
                        ops::conv_t2d_backward(&values[x.0], store.value(*w), &g, *stride, *pad);
                    store.accumulate_grad(*w, &gw);
                    store.accumulate_grad(*b, &gb);
                    acc(&mut grads[x.0], gx);
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    mean,
                    var,
                    eps,
                    train,
                } => {
                    if *train {
                        let (gx, gg, gb) = ops::batchnorm_backward(
                            &values[x.0],
                            store.value(*gamma),
                            mean,
                            var,
                            *eps,
                            &g,
                        );
                        store.accumulate_grad(*gamma, &gg);
                        store.accumulate_grad(*beta, &gb);
                        acc(&mut grads[x.0], gx);
                    } else {
                        // buffers are constants here, so the chain is affine
                        let c = values[x.0].dim().1;
                        let gamma_v = store.value(*gamma);
                        let mut gx = g.clone();
                        let mut gg = Tensor::zeros((c, 1, 1, 1));
                        let mut gb = Tensor::zeros((c, 1, 1, 1));
                        for ci in 0..c {
                            let inv_std = 1.0 / (var[ci] + *eps).sqrt();
                            let scale = gamma_v[(ci, 0, 0, 0)] * inv_std;
                            let mut plane = gx.index_axis_mut(ndarray::Axis(1), ci);
                            plane.mapv_inplace(|v| v * scale);
                            let xin = values[x.0].index_axis(ndarray::Axis(1), ci);
                            let gin = g.index_axis(ndarray::Axis(1), ci);
                            let mut sg = 0.0f64;
                            let mut sgx = 0.0f64;
                            for (&gv, &xv) in gin.iter().zip(xin.iter()) {
                                sg += gv as f64;
                                sgx += gv as f64 * ((xv - mean[ci]) * inv_std) as f64;
                            }
                            gb[(ci, 0, 0, 0)] = sg as f32;
                            gg[(ci, 0, 0, 0)] = sgx as f32;
                        }
                        store.accumulate_grad(*gamma, &gg);
                        store.accumulate_grad(*beta, &gb);
                        acc(&mut grads[x.0], gx);
                    }
                }
                Op::Relu { x } => {
                    acc(&mut grads[x.0], ops::relu_backward(&values[x.0], &g));
                }
                Op::MaxPool { x, argmax } => {
                    acc(
                        &mut grads[x.0],
                        ops::maxpool_backward(&g, argmax, values[x.0].dim()),
                    );
                }
                Op::AdaptiveAvgPool { x } => {
                    acc(
                        &mut grads[x.0],
                        ops::adaptive_avg_pool_backward(&g, values[x.0].dim()),
                    );
                }
                Op::UpsampleBilinear { x } => {
                    acc(
                        &mut grads[x.0],
                        ops::upsample_bilinear_backward(&g, values[x.0].dim()),
                    );
                }
                Op::Dropout { x, mask } => match mask {
                    Some(m) => acc(&mut grads[x.0], &g * m),
                    None => acc(&mut grads[x.0], g),
                },
                Op::Concat { xs, sizes } => {
                    let parts = ops::split_channels(&g, sizes);
                    for (id, part) in xs.iter().zip(parts) {
                        acc(&mut grads[id.0], part);
                    }
                }
                Op::Add { a, b } => {
                    acc(&mut grads[a.0], g.clone());
                    acc(&mut grads[b.0], g);
                }
                Op::Softmax { x } => {
                    acc(&mut grads[x.0], ops::softmax_backward(&values[i], &g));
                }
            }
        }
    }
}
