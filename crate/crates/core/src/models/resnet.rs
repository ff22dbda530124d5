//! ResNet-18-shaped encoder shared by LinkNet and PSPNet: 7x7/2 stem with
//! 3x3/2 max-pool, then four stages of two basic residual blocks at widths
//! 64, 128, 256, 512. Randomly initialized, never pretrained.

use cubeseg_nn::graph::{NodeId, Tape};
use cubeseg_nn::layers::{BatchNorm2d, Conv2d};
use cubeseg_nn::ParamStore;
use rand_chacha::ChaCha8Rng;

pub(super) const STAGE_WIDTHS: [usize; 4] = [64, 128, 256, 512];

pub(super) struct BasicBlock {
    c1: Conv2d,
    bn1: BatchNorm2d,
    c2: Conv2d,
    bn2: BatchNorm2d,
    proj: Option<(Conv2d, BatchNorm2d)>,
}

impl BasicBlock {
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Self {
        let c1 = Conv2d::new(store, rng, &format!("{name}.conv1"), cin, cout, 3, stride, 1);
        let bn1 = BatchNorm2d::new(store, &format!("{name}.bn1"), cout);
        let c2 = Conv2d::new(store, rng, &format!("{name}.conv2"), cout, cout, 3, 1, 1);
        let bn2 = BatchNorm2d::new(store, &format!("{name}.bn2"), cout);
        let proj = (stride != 1 || cin != cout).then(|| {
            (
                Conv2d::new(store, rng, &format!("{name}.proj"), cin, cout, 1, stride, 0),
                BatchNorm2d::new(store, &format!("{name}.proj_bn"), cout),
            )
        });
        BasicBlock {
            c1,
            bn1,
            c2,
            bn2,
            proj,
        }
    }

    fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let a = self.c1.forward(tape, x);
        let a = self.bn1.forward(tape, a);
        let a = tape.relu(a);
        let b = self.c2.forward(tape, a);
        let b = self.bn2.forward(tape, b);
        let shortcut = match &self.proj {
            Some((conv, bn)) => {
                let p = conv.forward(tape, x);
                bn.forward(tape, p)
            }
            None => x,
        };
        let sum = tape.add(b, shortcut);
        tape.relu(sum)
    }
}

pub(super) struct ResnetEncoder {
    stem: Conv2d,
    stem_bn: BatchNorm2d,
    stages: Vec<[BasicBlock; 2]>,
}

impl ResnetEncoder {
    pub(super) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_channels: usize,
    ) -> Self {
        let stem = Conv2d::new(
            store,
            rng,
            &format!("{prefix}.stem.conv"),
            in_channels,
            64,
            7,
            2,
            3,
        );
        let stem_bn = BatchNorm2d::new(store, &format!("{prefix}.stem.bn"), 64);
        let mut stages = Vec::with_capacity(4);
        let mut cin = 64;
        for (si, &w) in STAGE_WIDTHS.iter().enumerate() {
            let stage = si + 1;
            let stride = if si == 0 { 1 } else { 2 };
            stages.push([
                BasicBlock::new(
                    store,
                    rng,
                    &format!("{prefix}.stage{stage}.block1"),
                    cin,
                    w,
                    stride,
                ),
                BasicBlock::new(store, rng, &format!("{prefix}.stage{stage}.block2"), w, w, 1),
            ]);
            cin = w;
        }
        ResnetEncoder {
            stem,
            stem_bn,
            stages,
        }
    }

    /// Runs the encoder, applying `stage_dropout[i]` to stage i's output
    /// before it feeds the next stage. Returns the (dropped) stage outputs
    /// shallow to deep, at 1/4, 1/8, 1/16 and 1/32 of the input resolution.
    pub(super) fn forward(
        &self,
        tape: &mut Tape,
        x: NodeId,
        stage_dropout: [f32; 4],
    ) -> [NodeId; 4] {
        let s = self.stem.forward(tape, x);
        let s = self.stem_bn.forward(tape, s);
        let s = tape.relu(s);
        let mut cur = tape.maxpool(s, 3, 2, 1);
        let mut outs = [cur; 4];
        for (i, [b1, b2]) in self.stages.iter().enumerate() {
            cur = b1.forward(tape, cur);
            cur = b2.forward(tape, cur);
            cur = tape.dropout(cur, stage_dropout[i]);
            outs[i] = cur;
        }
        outs
    }
}
