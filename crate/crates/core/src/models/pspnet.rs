//! PSPNet: ResNet18 backbone, pyramid pooling module, 3x3 head, bilinear
//! upsample to full resolution. No dropout anywhere.

use cubeseg_nn::graph::{NodeId, Tape};
use cubeseg_nn::layers::{BatchNorm2d, Conv2d};
use cubeseg_nn::ParamStore;
use rand_chacha::ChaCha8Rng;

use super::resnet::{ResnetEncoder, STAGE_WIDTHS};
use super::ModelConfig;

pub(super) struct Pspnet {
    encoder: ResnetEncoder,
    ppm: Vec<(Conv2d, BatchNorm2d)>,
    bins: Vec<usize>,
    head: Conv2d,
    out_size: (usize, usize),
}

impl Pspnet {
    pub(super) fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Self {
        let encoder = ResnetEncoder::new(store, rng, "backbone", cfg.in_channels);
        let deep = STAGE_WIDTHS[3];
        // each pyramid branch carries an equal share of the backbone width,
        // so the concat always doubles it (512 + 4 * 128 = 1024 by default)
        let branch = deep / cfg.ppm_bins.len();
        let ppm = cfg
            .ppm_bins
            .iter()
            .map(|bin| {
                (
                    Conv2d::new(
                        store,
                        rng,
                        &format!("ppm.bin{bin}.conv"),
                        deep,
                        branch,
                        1,
                        1,
                        0,
                    ),
                    BatchNorm2d::new(store, &format!("ppm.bin{bin}.bn"), branch),
                )
            })
            .collect();
        let head = Conv2d::new(
            store,
            rng,
            "head",
            deep + branch * cfg.ppm_bins.len(),
            cfg.num_classes,
            3,
            1,
            1,
        );
        Pspnet {
            encoder,
            ppm,
            bins: cfg.ppm_bins.clone(),
            head,
            out_size: cfg.input_size,
        }
    }

    pub(super) fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        let [_, _, _, deep] = self.encoder.forward(tape, x, [0.0; 4]);
        let (_, _, gh, gw) = tape.value(deep).dim();
        let mut parts = vec![deep];
        for (&bin, (conv, bn)) in self.bins.iter().zip(&self.ppm) {
            let pooled = tape.adaptive_avg_pool(deep, bin, bin);
            let c = conv.forward(tape, pooled);
            let c = bn.forward(tape, c);
            let c = tape.relu(c);
            parts.push(tape.upsample_bilinear(c, gh, gw));
        }
        let cat = tape.concat(&parts);
        let logits = self.head.forward(tape, cat);
        let full = tape.upsample_bilinear(logits, self.out_size.0, self.out_size.1);
        tape.softmax(full)
    }
}
