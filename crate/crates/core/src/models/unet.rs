//! U-Net with all widths quartered: encoder (16, 32, 64, 128), bottleneck
//! 256, concatenative skips, no batch norm.

use cubeseg_nn::graph::{NodeId, Tape};
use cubeseg_nn::layers::{Conv2d, ConvT2d};
use cubeseg_nn::ParamStore;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;

pub(super) struct UnetLight {
    enc: Vec<[Conv2d; 2]>,
    bottleneck: [Conv2d; 2],
    // decoder stored deepest first, matching forward order
    up: Vec<ConvT2d>,
    dec: Vec<[Conv2d; 2]>,
    head: Conv2d,
    dropout: (f32, f32, f32),
}

impl UnetLight {
    pub(super) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let b = cfg.base_width;
        let widths = [b, 2 * b, 4 * b, 8 * b];
        let mut enc = Vec::with_capacity(4);
        let mut cin = cfg.in_channels;
        for (i, &w) in widths.iter().enumerate() {
            let lvl = i + 1;
            enc.push([
                Conv2d::new(store, rng, &format!("enc{lvl}.conv1"), cin, w, 3, 1, 1),
                Conv2d::new(store, rng, &format!("enc{lvl}.conv2"), w, w, 3, 1, 1),
            ]);
            cin = w;
        }
        let bw = 16 * b;
        let bottleneck = [
            Conv2d::new(store, rng, "bottleneck.conv1", 8 * b, bw, 3, 1, 1),
            Conv2d::new(store, rng, "bottleneck.conv2", bw, bw, 3, 1, 1),
        ];
        let mut up = Vec::with_capacity(4);
        let mut dec = Vec::with_capacity(4);
        let mut cur = bw;
        for (i, &w) in widths.iter().enumerate().rev() {
            let lvl = i + 1;
            up.push(ConvT2d::new(
                store,
                rng,
                &format!("dec{lvl}.up"),
                cur,
                w,
                2,
                2,
                0,
                0,
            ));
            dec.push([
                Conv2d::new(store, rng, &format!("dec{lvl}.conv1"), 2 * w, w, 3, 1, 1),
                Conv2d::new(store, rng, &format!("dec{lvl}.conv2"), w, w, 3, 1, 1),
            ]);
            cur = w;
        }
        let head = Conv2d::new(store, rng, "head", cur, cfg.num_classes, 1, 1, 0);
        UnetLight {
            enc,
            bottleneck,
            up,
            dec,
            head,
            dropout: cfg.dropout,
        }
    }

    pub(super) fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let (d_enc, d_bott, d_dec) = self.dropout;
        let mut skips = Vec::with_capacity(4);
        let mut cur = x;
        for [c1, c2] in &self.enc {
            let a = c1.forward(tape, cur);
            let a = tape.relu(a);
            let b = c2.forward(tape, a);
            let b = tape.relu(b);
            skips.push(b);
            let p = tape.maxpool(b, 2, 2, 0);
            cur = tape.dropout(p, d_enc);
        }
        let a = self.bottleneck[0].forward(tape, cur);
        let a = tape.relu(a);
        let b = self.bottleneck[1].forward(tape, a);
        let b = tape.relu(b);
        cur = tape.dropout(b, d_bott);
        for (i, (up, convs)) in self.up.iter().zip(&self.dec).enumerate() {
            let u = up.forward(tape, cur);
            let cat = tape.concat(&[u, skips[3 - i]]);
            let a = convs[0].forward(tape, cat);
            let a = tape.relu(a);
            let b = convs[1].forward(tape, a);
            let b = tape.relu(b);
            cur = tape.dropout(b, d_dec);
        }
        let logits = self.head.forward(tape, cur);
        tape.softmax(logits)
    }
}
