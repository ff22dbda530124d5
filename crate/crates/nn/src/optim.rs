//! Adam optimizer.

use crate::params::ParamStore;
use crate::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let mut m = Vec::with_capacity(store.num_params());
        let mut v = Vec::with_capacity(store.num_params());
        for i in 0..store.num_params() {
            let dim = store.value(crate::params::ParamId(i)).raw_dim();
            m.push(Tensor::zeros(dim.clone()));
            v.push(Tensor::zeros(dim));
        }
        Adam { cfg, m, v, t: 0 }
    }

    /// One update using the gradients currently held by the store.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.cfg.lr;
        let eps = self.cfg.eps;
        let (ms, vs) = (&mut self.m, &mut self.v);
        store.update_params(|i, value, grad| {
            let m = &mut ms[i];
            let v = &mut vs[i];
            let (msl, vsl, val, gr) = (
                m.as_slice_mut().unwrap(),
                v.as_slice_mut().unwrap(),
                value.as_slice_mut().unwrap(),
                grad.as_slice().unwrap(),
            );
            for j in 0..val.len() {
                let g = gr[j];
                msl[j] = b1 * msl[j] + (1.0 - b1) * g;
                vsl[j] = b2 * vsl[j] + (1.0 - b2) * g * g;
                let m_hat = msl[j] / bc1;
                let v_hat = vsl[j] / bc2;
                val[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }
}
