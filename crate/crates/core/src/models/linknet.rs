//! LinkNet: ResNet-style encoder, bottlenecked decoder blocks with additive
//! skips, batch norm after every convolution.

use cubeseg_nn::graph::{NodeId, Tape};
use cubeseg_nn::layers::{BatchNorm2d, Conv2d, ConvT2d};
use cubeseg_nn::ParamStore;
use rand_chacha::ChaCha8Rng;

use super::resnet::{ResnetEncoder, STAGE_WIDTHS};
use super::ModelConfig;

/// 1x1 squeeze to a quarter of the input width, 3x3 transposed conv
/// (stride 2 where the mirrored encoder stage downsampled, else 1), 1x1
/// expand to the target width. Batch norm and ReLU after each.
struct DecoderBlock {
    squeeze: Conv2d,
    bn1: BatchNorm2d,
    up: ConvT2d,
    bn2: BatchNorm2d,
    expand: Conv2d,
    bn3: BatchNorm2d,
}

impl DecoderBlock {
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Self {
        let mid = cin / 4;
        DecoderBlock {
            squeeze: Conv2d::new(store, rng, &format!("{name}.squeeze"), cin, mid, 1, 1, 0),
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), mid),
            up: ConvT2d::new(
                store,
                rng,
                &format!("{name}.up"),
                mid,
                mid,
                3,
                stride,
                1,
                stride - 1,
            ),
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), mid),
            expand: Conv2d::new(store, rng, &format!("{name}.expand"), mid, cout, 1, 1, 0),
            bn3: BatchNorm2d::new(store, &format!("{name}.bn3"), cout),
        }
    }

    fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let a = self.squeeze.forward(tape, x);
        let a = self.bn1.forward(tape, a);
        let a = tape.relu(a);
        let b = self.up.forward(tape, a);
        let b = self.bn2.forward(tape, b);
        let b = tape.relu(b);
        let c = self.expand.forward(tape, b);
        let c = self.bn3.forward(tape, c);
        tape.relu(c)
    }
}

pub(super) struct Linknet {
    encoder: ResnetEncoder,
    // deepest first: dec4 (512->256), dec3, dec2, then dec1 keeping 64 at
    // stride 1, mirroring the stride-1 first encoder stage
    dec: Vec<DecoderBlock>,
    final_up: ConvT2d,
    final_bn: BatchNorm2d,
    head: ConvT2d,
    dropout: (f32, f32, f32),
}

impl Linknet {
    pub(super) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let encoder = ResnetEncoder::new(store, rng, "enc", cfg.in_channels);
        let mut dec = Vec::with_capacity(4);
        for lvl in (1..=4).rev() {
            let cin = STAGE_WIDTHS[lvl - 1];
            let cout = if lvl == 1 { 64 } else { STAGE_WIDTHS[lvl - 2] };
            let stride = if lvl == 1 { 1 } else { 2 };
            dec.push(DecoderBlock::new(
                store,
                rng,
                &format!("dec{lvl}"),
                cin,
                cout,
                stride,
            ));
        }
        let final_up = ConvT2d::new(store, rng, "final.up", 64, 32, 3, 2, 1, 1);
        let final_bn = BatchNorm2d::new(store, "final.bn", 32);
        let head = ConvT2d::new(store, rng, "head", 32, cfg.num_classes, 2, 2, 0, 0);
        Linknet {
            encoder,
            dec,
            final_up,
            final_bn,
            head,
            dropout: cfg.dropout,
        }
    }

    pub(super) fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let (d_enc, d_bott, d_dec) = self.dropout;
        // the deepest stage takes the bottleneck rate
        let [e1, e2, e3, e4] = self.encoder.forward(tape, x, [d_enc, d_enc, d_enc, d_bott]);
        let skips = [e3, e2, e1];
        let mut cur = e4;
        for (i, block) in self.dec.iter().enumerate() {
            cur = block.forward(tape, cur);
            cur = tape.dropout(cur, d_dec);
            if let Some(&skip) = skips.get(i) {
                cur = tape.add(cur, skip);
            }
        }
        let f = self.final_up.forward(tape, cur);
        let f = self.final_bn.forward(tape, f);
        let f = tape.relu(f);
        let logits = self.head.forward(tape, f);
        tape.softmax(logits)
    }
}
