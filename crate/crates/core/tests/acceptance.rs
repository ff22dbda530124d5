//! Numbered acceptance checks covering the whole pipeline, one test per
//! criterion. Each test prints a line like
//!
//! ```text
//! criterion 03 shape_normalization: PASS (batch 2: unet_light (128x128) ...)
//! ```
//!
//! with the measured values and the pinned tolerance, then panics if the
//! check failed, so the harness shows one verdict per criterion. Run with
//! `-- --nocapture --test-threads=1` to see the lines in order. Criteria
//! 4, 7 and 8 train real models on generated corpora and dominate the
//! runtime (minutes on a single CPU core); everything else is seconds.

use std::collections::BTreeSet;
use std::ops::ControlFlow;

use ndarray::{Array2, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cubeseg_core::datapipe::{
    augment, expand_dataset, split_dataset, DatasetCache, SplitFractions, AUGMENTATION_OPS,
};
use cubeseg_core::label::LabelSpace;
use cubeseg_core::metrics::ConfusionMatrix;
use cubeseg_core::models::{Arch, ModelConfig, SegmentationModel};
use cubeseg_core::scenegen::{
    generate_dataset, image_path, load_mask, load_rgb, mask_path, DatasetManifest, GenerateSpec,
    RenderConfig, RenderedView, Split,
};
use cubeseg_core::trainer::{self, CheckpointPlan, TrainConfig};
use cubeseg_core::Mask;
use cubeseg_nn::graph::{Mode, NodeId, Tape};
use cubeseg_nn::layers::{Conv2d, ConvT2d};
use cubeseg_nn::loss::cross_entropy;
use cubeseg_nn::{ParamStore, Tensor};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:02} {name}: {verdict} ({detail})");
    assert!(pass, "criterion {n:02} {name} failed: {detail}");
}

fn all_ops() -> Vec<String> {
    AUGMENTATION_OPS.iter().map(|s| s.to_string()).collect()
}

/// Small fixed corpus shared by the cheaper criteria: two houses, two
/// angles, no knockouts, default render settings.
fn shed_cabin_corpus(seed: u64) -> (tempfile::TempDir, DatasetManifest) {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = GenerateSpec::standard(LabelSpace::semantic4(), RenderConfig::default(), seed);
    spec.houses.retain(|h| h.name == "shed" || h.name == "cabin");
    spec.angles = vec![0, 60];
    spec.knockout_plans.clear();
    let manifest = generate_dataset(&spec, dir.path()).unwrap();
    (dir, manifest)
}

// --- criteria 1 and 2: brute-force per-pixel metric oracle ---

struct Counts {
    tp: u64,
    fp: u64,
    fneg: u64,
}

fn oracle_counts(pred: &Mask, truth: &Mask, classes: usize) -> Vec<Counts> {
    let mut out: Vec<Counts> = (0..classes)
        .map(|_| Counts {
            tp: 0,
            fp: 0,
            fneg: 0,
        })
        .collect();
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        let (p, t) = (p as usize, t as usize);
        if p == t {
            out[p].tp += 1;
        } else {
            out[p].fp += 1;
            out[t].fneg += 1;
        }
    }
    out
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean_defined(values: &[Option<f64>], start: usize) -> Option<f64> {
    let defined: Vec<f64> = values[start..].iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Random (pred, truth) pair with classes sometimes missing on either side,
/// so the undefined-metric paths get exercised.
fn random_mask_pair(rng: &mut ChaCha8Rng) -> (Mask, Mask, usize) {
    let classes = [2usize, 4, 8][rng.random_range(0..3usize)];
    let h = rng.random_range(1..=16usize);
    let w = rng.random_range(1..=16usize);
    let truth_hi = rng.random_range(1..=classes) as u8;
    let pred_hi = rng.random_range(1..=classes) as u8;
    let truth = Array2::from_shape_fn((h, w), |_| rng.random_range(0..truth_hi));
    let pred = Array2::from_shape_fn((h, w), |_| rng.random_range(0..pred_hi));
    (pred, truth, classes)
}

fn option_delta(lib: Option<f64>, oracle: Option<f64>) -> f64 {
    match (lib, oracle) {
        (Some(a), Some(b)) => (a - b).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

fn max_delta(lib: &[Option<f64>], oracle: &[Option<f64>]) -> f64 {
    assert_eq!(lib.len(), oracle.len());
    lib.iter()
        .zip(oracle)
        .map(|(&a, &b)| option_delta(a, b))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_01_metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (pred, truth, classes) = random_mask_pair(&mut rng);
        let mut cm = ConfusionMatrix::new(classes);
        cm.accumulate(&pred, &truth).unwrap();
        let counts = oracle_counts(&pred, &truth, classes);

        let iou: Vec<_> = counts
            .iter()
            .map(|c| ratio(c.tp, c.tp + c.fp + c.fneg))
            .collect();
        let precision: Vec<_> = counts.iter().map(|c| ratio(c.tp, c.tp + c.fp)).collect();
        let recall: Vec<_> = counts.iter().map(|c| ratio(c.tp, c.tp + c.fneg)).collect();
        let f1: Vec<_> = counts
            .iter()
            .map(|c| ratio(2 * c.tp, 2 * c.tp + c.fp + c.fneg))
            .collect();

        worst = worst.max(max_delta(&cm.iou_per_class(), &iou));
        let (lib_p, lib_r) = cm.precision_recall();
        worst = worst.max(max_delta(&lib_p, &precision));
        worst = worst.max(max_delta(&lib_r, &recall));
        worst = worst.max(max_delta(&cm.f1_per_class(), &f1));
        for include_background in [true, false] {
            let start = if include_background { 0 } else { 1 };
            worst = worst.max(option_delta(
                cm.mean_iou(include_background).ok(),
                mean_defined(&iou, start),
            ));
        }
        worst = worst.max(option_delta(cm.macro_f1().ok(), mean_defined(&f1, 0)));
    }
    report(
        1,
        "metric_oracle",
        worst <= 1e-12,
        &format!(
            "max |library - oracle| {worst:.2e} over 200 random mask pairs, \
             C in {{2, 4, 8}}, sizes up to 16x16 (tolerance 1e-12)"
        ),
    );
}

#[test]
fn criterion_02_dice_jaccard_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut exact = true;
    let mut checked = 0u32;
    for _ in 0..200 {
        let (pred, truth, classes) = random_mask_pair(&mut rng);
        let mut cm = ConfusionMatrix::new(classes);
        cm.accumulate(&pred, &truth).unwrap();
        let counts = oracle_counts(&pred, &truth, classes);
        let f1 = cm.f1_per_class();
        let iou = cm.iou_per_class();
        for (k, c) in counts.iter().enumerate() {
            match (f1[k], iou[k]) {
                (Some(f1), Some(iou)) => {
                    checked += 1;
                    let from_counts = 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fneg) as f64;
                    exact &= f1.to_bits() == from_counts.to_bits();
                    worst = worst.max((f1 - 2.0 * iou / (1.0 + iou)).abs());
                }
                (None, None) => exact &= c.tp + c.fp + c.fneg == 0,
                _ => exact = false,
            }
        }
    }
    report(
        2,
        "dice_jaccard_identity",
        exact && worst <= 1e-12,
        &format!(
            "F1 bitwise equal to 2TP/(2TP+FP+FN) for {checked} defined classes; \
             max |F1 - 2 IoU/(1+IoU)| {worst:.2e} (tolerance 1e-12)"
        ),
    );
}

#[test]
fn criterion_03_shape_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut pass = true;
    let mut lines = Vec::new();
    let expected = [
        (Arch::UnetLight, (128, 128)),
        (Arch::Linknet, (128, 128)),
        (Arch::Pspnet, (192, 192)),
    ];
    for (arch, size) in expected {
        let cfg = ModelConfig::new(arch, 4);
        pass &= cfg.input_size == size;
        let (h, w) = cfg.input_size;
        let mut model = SegmentationModel::build(&cfg, 5).unwrap();
        let x = Array4::from_shape_fn((2, h, w, 1), |_| rng.random_range(0.0..1.0f32));
        let probs = model.forward(&x).unwrap();
        pass &= probs.dim() == (2, h, w, 4);
        let max_dev = probs
            .sum_axis(Axis(3))
            .iter()
            .fold(0.0f32, |m, s| m.max((s - 1.0).abs()));
        let min_p = probs.iter().fold(f32::INFINITY, |m, &p| m.min(p));
        pass &= max_dev <= 1e-5 && min_p >= 0.0;
        lines.push(format!("{arch} ({h}x{w}) max |sum - 1| {max_dev:.1e}"));
    }
    report(
        3,
        "shape_normalization",
        pass,
        &format!("batch 2: {} (tolerance 1e-5)", lines.join(", ")),
    );
}

#[test]
fn criterion_04_memorization() {
    let (dir, manifest) = shed_cabin_corpus(21);
    let fractions = SplitFractions {
        train: 1.0,
        val: 0.0,
        test: 0.0,
    };
    let manifest = split_dataset(&manifest, fractions, 21, false).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for arch in Arch::ALL {
        let cfg = ModelConfig::new(arch, 4);
        let cache =
            DatasetCache::load(&manifest, dir.path(), Split::Train, cfg.input_size).unwrap();
        let batch = cache.batch(&[0, 1, 2, 3]);
        let losses = trainer::sanity_overfit(&cfg, &batch, 200, 7, Some(0.1)).unwrap();
        let last = *losses.last().unwrap();
        pass &= last < 0.1;
        lines.push(format!("{arch} reached CE {last:.4} in {} steps", losses.len()));
    }
    report(
        4,
        "memorization",
        pass,
        &format!(
            "one batch of 4 rendered samples per architecture: {} \
             (target CE < 0.1 within 200 steps)",
            lines.join(", ")
        ),
    );
}

// --- criterion 5: f64 oracle for the output heads ---

fn conv2d_f64(x: &Array4<f64>, w: &Array4<f64>, b: &[f64], stride: usize, pad: usize) -> Array4<f64> {
    let (n, cin, h, wd) = x.dim();
    let (cout, _, kh, kw) = w.dim();
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut y = Array4::from_elem((n, cout, ho, wo), 0.0);
    for i in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < wd as isize {
                                    acc += x[(i, ci, iy as usize, ix as usize)]
                                        * w[(co, ci, ky, kx)];
                                }
                            }
                        }
                    }
                    y[(i, co, oy, ox)] = acc;
                }
            }
        }
    }
    y
}

fn conv_t2d_f64(
    x: &Array4<f64>,
    w: &Array4<f64>,
    b: &[f64],
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Array4<f64> {
    let (n, cin, h, wd) = x.dim();
    let (_, cout, kh, kw) = w.dim();
    let ho = (h - 1) * stride + kh + out_pad - 2 * pad;
    let wo = (wd - 1) * stride + kw + out_pad - 2 * pad;
    let mut y = Array4::from_shape_fn((n, cout, ho, wo), |(_, co, _, _)| b[co]);
    for i in 0..n {
        for ci in 0..cin {
            for iy in 0..h {
                for ix in 0..wd {
                    for co in 0..cout {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy >= 0 && oy < ho as isize && ox >= 0 && ox < wo as isize {
                                    y[(i, co, oy as usize, ox as usize)] +=
                                        x[(i, ci, iy, ix)] * w[(ci, co, ky, kx)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Same function the engine computes after the head: channel softmax, then
/// cross entropy against a one-hot target with probabilities clamped at
/// 1e-7, averaged over all pixels.
fn softmax_ce_f64(logits: &Array4<f64>, target: &Tensor) -> f64 {
    let (n, c, h, w) = logits.dim();
    let mut loss = 0.0;
    for i in 0..n {
        for y in 0..h {
            for x in 0..w {
                let mut mx = f64::NEG_INFINITY;
                for k in 0..c {
                    mx = mx.max(logits[(i, k, y, x)]);
                }
                let mut denom = 0.0;
                for k in 0..c {
                    denom += (logits[(i, k, y, x)] - mx).exp();
                }
                for k in 0..c {
                    let t = target[(i, k, y, x)] as f64;
                    if t > 0.0 {
                        let p = ((logits[(i, k, y, x)] - mx).exp() / denom).max(1e-7);
                        loss -= t * p.ln();
                    }
                }
            }
        }
    }
    loss / (n * h * w) as f64
}

enum HeadLayer {
    Conv(Conv2d),
    Transposed(ConvT2d),
}

impl HeadLayer {
    fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            HeadLayer::Conv(l) => l.forward(tape, x),
            HeadLayer::Transposed(l) => l.forward(tape, x),
        }
    }
}

struct HeadCheck {
    max_rel: f64,
    checked: usize,
    total: usize,
}

/// Gradient check for one architecture's output head on a 4x4 feature crop:
/// the engine's analytic f32 gradients against central differences of an
/// independent f64 forward.
fn head_gradient_check(arch: Arch, weight_step: usize) -> HeadCheck {
    let classes = 4;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    // geometry copied from the real models: a 1x1 conv from width 16
    // (unet_light), a 2x stride-2 transposed conv from width 32 (linknet),
    // a padded 3x3 conv from the 1024-wide pyramid concat (pspnet)
    let (head, cin, stride, pad, out_pad, oh) = match arch {
        Arch::UnetLight => {
            let l = Conv2d::new(&mut store, &mut rng, "head", 16, classes, 1, 1, 0);
            (HeadLayer::Conv(l), 16, 1, 0, 0, 4)
        }
        Arch::Linknet => {
            let l = ConvT2d::new(&mut store, &mut rng, "head", 32, classes, 2, 2, 0, 0);
            (HeadLayer::Transposed(l), 32, 2, 0, 0, 8)
        }
        Arch::Pspnet => {
            let l = Conv2d::new(&mut store, &mut rng, "head", 1024, classes, 3, 1, 1);
            (HeadLayer::Conv(l), 1024, 1, 1, 0, 4)
        }
    };
    let x32 = Tensor::from_shape_fn((2, cin, 4, 4), |_| rng.random_range(-1.0..1.0f32));
    let mut target = Tensor::zeros((2, classes, oh, oh));
    for i in 0..2 {
        for y in 0..oh {
            for x in 0..oh {
                target[(i, rng.random_range(0..classes), y, x)] = 1.0;
            }
        }
    }

    let mut tape_rng = ChaCha8Rng::seed_from_u64(34);
    let mut tape = Tape::new(&mut store, Mode::Train, &mut tape_rng);
    let xid = tape.input(x32.clone());
    let logits = head.forward(&mut tape, xid);
    let sm = tape.softmax(logits);
    let (_, seed_grad) = cross_entropy(tape.value(sm), &target);
    tape.backward(sm, seed_grad);
    drop(tape);

    fn find_tensor<'a>(mut it: impl Iterator<Item = (&'a str, &'a Tensor)>, name: &str) -> Tensor {
        it.find(|(n, _)| *n == name).unwrap().1.clone()
    }
    let analytic_w = find_tensor(store.param_grads(), "head.weight");
    let analytic_b = find_tensor(store.param_grads(), "head.bias");
    let w64 = find_tensor(store.params(), "head.weight").mapv(f64::from);
    let b64: Vec<f64> = find_tensor(store.params(), "head.bias")
        .iter()
        .map(|&v| v as f64)
        .collect();
    let x64 = x32.mapv(f64::from);

    let loss_at = |wp: &Array4<f64>, bp: &[f64]| -> f64 {
        let logits = match &head {
            HeadLayer::Conv(_) => conv2d_f64(&x64, wp, bp, stride, pad),
            HeadLayer::Transposed(_) => conv_t2d_f64(&x64, wp, bp, stride, pad, out_pad),
        };
        softmax_ce_f64(&logits, &target)
    };

    const H: f64 = 1e-4;
    const FLOOR: f64 = 1e-3;
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;

    let mut wp = w64.clone();
    let indices: Vec<usize> = (0..wp.len()).step_by(weight_step).collect();
    for &i in &indices {
        let orig = wp.as_slice().unwrap()[i];
        wp.as_slice_mut().unwrap()[i] = orig + H;
        let up = loss_at(&wp, &b64);
        wp.as_slice_mut().unwrap()[i] = orig - H;
        let down = loss_at(&wp, &b64);
        wp.as_slice_mut().unwrap()[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        let analytic = analytic_w.as_slice().unwrap()[i] as f64;
        max_rel = max_rel.max((analytic - numeric).abs() / numeric.abs().max(FLOOR));
        checked += 1;
    }
    let mut bp = b64.clone();
    for (i, &analytic) in analytic_b.iter().enumerate() {
        let orig = bp[i];
        bp[i] = orig + H;
        let up = loss_at(&w64, &bp);
        bp[i] = orig - H;
        let down = loss_at(&w64, &bp);
        bp[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        max_rel = max_rel.max((analytic as f64 - numeric).abs() / numeric.abs().max(FLOOR));
        checked += 1;
    }
    HeadCheck {
        max_rel,
        checked,
        total: w64.len() + b64.len(),
    }
}

#[test]
fn criterion_05_head_gradient_check() {
    let mut pass = true;
    let mut lines = Vec::new();
    // the pspnet head has 36868 parameters; stride the weight scan so the
    // oracle stays in the seconds range while biases are always all checked
    for (arch, weight_step) in [(Arch::UnetLight, 1), (Arch::Linknet, 1), (Arch::Pspnet, 25)] {
        let check = head_gradient_check(arch, weight_step);
        pass &= check.max_rel <= 1e-3;
        lines.push(format!(
            "{arch} max rel {:.1e} over {} of {} params",
            check.max_rel, check.checked, check.total
        ));
    }
    report(
        5,
        "head_gradient_check",
        pass,
        &format!(
            "analytic f32 vs f64 central differences on a 4x4 crop: {} \
             (tolerance rel 1e-3, denominator floor 1e-3)",
            lines.join(", ")
        ),
    );
}

#[test]
fn criterion_06_parameter_accounting() {
    let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
    let tconv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
    let widths = [16usize, 32, 64, 128];
    let bottleneck = 256usize;
    let classes = 4usize;

    let mut expect = 0usize;
    let mut cin = 1usize;
    for &w in &widths {
        expect += conv(cin, w, 3) + conv(w, w, 3);
        cin = w;
    }
    expect += conv(widths[3], bottleneck, 3) + conv(bottleneck, bottleneck, 3);
    let mut cur = bottleneck;
    for &w in widths.iter().rev() {
        expect += tconv(cur, w, 2) + conv(2 * w, w, 3) + conv(w, w, 3);
        cur = w;
    }
    expect += conv(widths[0], classes, 1);

    let unet = SegmentationModel::build(&ModelConfig::new(Arch::UnetLight, classes), 1).unwrap();
    let got = unet.param_count();

    let linknet = SegmentationModel::build(&ModelConfig::new(Arch::Linknet, classes), 1).unwrap();
    let stage_widths: Vec<usize> = (1..=4)
        .map(|s| {
            let name = format!("enc.stage{s}.block1.conv1.weight");
            linknet
                .store()
                .params()
                .find(|(n, _)| *n == name)
                .unwrap()
                .1
                .dim()
                .0
        })
        .collect();

    let pspnet = SegmentationModel::build(&ModelConfig::new(Arch::Pspnet, classes), 1).unwrap();
    let head_in = pspnet
        .store()
        .params()
        .find(|(n, _)| *n == "head.weight")
        .unwrap()
        .1
        .dim()
        .1;

    let pass = got == expect && stage_widths == [64, 128, 256, 512] && head_in == 1024;
    report(
        6,
        "parameter_accounting",
        pass,
        &format!(
            "unet_light {got} params vs analytic sum {expect} (widths 16/32/64/128, \
             bottleneck 256); linknet encoder stages {stage_widths:?} expect \
             [64, 128, 256, 512]; pspnet head input {head_in} expect 1024"
        ),
    );
}

#[test]
fn criterion_07_desk_scale_semantic4() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GenerateSpec::standard(LabelSpace::semantic4(), RenderConfig::default(), 11);
    let base = generate_dataset(&spec, dir.path()).unwrap();
    let expanded = expand_dataset(&base, dir.path(), &all_ops(), 5, 11).unwrap();
    let fractions = SplitFractions {
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };
    let manifest = split_dataset(&expanded, fractions, 11, true).unwrap();
    let cfg = ModelConfig::new(Arch::UnetLight, 4);
    let train_cache = DatasetCache::load(&manifest, dir.path(), Split::Train, cfg.input_size).unwrap();
    let val_cache = DatasetCache::load(&manifest, dir.path(), Split::Val, cfg.input_size).unwrap();
    let enough = train_cache.len() >= 400;

    let mut model = SegmentationModel::build(&cfg, 7).unwrap();
    let schedule = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let outcome = trainer::train(
        &mut model,
        &train_cache,
        &val_cache,
        &schedule,
        None,
        |_, stats| {
            if stats.val_mean_iou >= 0.60 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )
    .unwrap();

    let pass = enough && outcome.best_val_mean_iou >= 0.60;
    report(
        7,
        "desk_scale_semantic4",
        pass,
        &format!(
            "val MeanIoU {:.4} after {} of at most 30 epochs, {} augmented training \
             samples (floor 400), batch 16, lr 0.001 (threshold 0.60; full-scale \
             reference 0.7789 recorded for context, not gated)",
            outcome.best_val_mean_iou,
            outcome.history.epochs.len(),
            train_cache.len()
        ),
    );
}

#[test]
fn criterion_08_desk_scale_percube44() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GenerateSpec::standard(LabelSpace::percube44(), RenderConfig::default(), 13);
    let base = generate_dataset(&spec, dir.path()).unwrap();
    let expanded = expand_dataset(&base, dir.path(), &all_ops(), 2, 13).unwrap();
    let fractions = SplitFractions {
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };
    let manifest = split_dataset(&expanded, fractions, 13, true).unwrap();
    let cfg = ModelConfig::new(Arch::UnetLight, 44);
    let train_cache = DatasetCache::load(&manifest, dir.path(), Split::Train, cfg.input_size).unwrap();
    let val_cache = DatasetCache::load(&manifest, dir.path(), Split::Val, cfg.input_size).unwrap();

    let mut model = SegmentationModel::build(&cfg, 9).unwrap();
    let schedule = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let outcome = trainer::train(
        &mut model,
        &train_cache,
        &val_cache,
        &schedule,
        None,
        |_, _| ControlFlow::Continue(()),
    )
    .unwrap();
    let val_report = trainer::evaluate(&mut model, &val_cache, 16, true).unwrap();
    let background = val_report.per_class_iou[0];

    let shown = match background {
        Some(b) => format!("{b:.4}"),
        None => "undefined".to_string(),
    };
    let pass = matches!(background, Some(b) if b >= 0.80);
    report(
        8,
        "desk_scale_percube44",
        pass,
        &format!(
            "44-class pipeline completed: {} train samples, {} epochs; background \
             IoU {shown} (threshold 0.80); {} of 44 classes undefined on val, \
             structure classes expectedly weak at this scale",
            train_cache.len(),
            outcome.history.epochs.len(),
            val_report.undefined_classes.len()
        ),
    );
}

#[test]
fn criterion_09_determinism() {
    let build = |seed: u64| -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let spec = GenerateSpec::standard(LabelSpace::semantic4(), RenderConfig::default(), seed);
        let base = generate_dataset(&spec, dir.path()).unwrap();
        let expanded = expand_dataset(&base, dir.path(), &all_ops(), 2, seed).unwrap();
        let fractions = SplitFractions {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        };
        let manifest = split_dataset(&expanded, fractions, seed, true).unwrap();
        let path = dir.path().join("manifest.json");
        manifest.save(&path).unwrap();
        std::fs::read(&path).unwrap()
    };
    let first = build(17);
    let second = build(17);
    let manifests_equal = first == second;

    let (dir, manifest) = shed_cabin_corpus(21);
    let fractions = SplitFractions {
        train: 0.7,
        val: 0.3,
        test: 0.0,
    };
    let manifest = split_dataset(&manifest, fractions, 3, false).unwrap();
    let mut cfg = ModelConfig::new(Arch::UnetLight, 4);
    cfg.input_size = (32, 32);
    cfg.base_width = 4;
    let train_cache = DatasetCache::load(&manifest, dir.path(), Split::Train, cfg.input_size).unwrap();
    let val_cache = DatasetCache::load(&manifest, dir.path(), Split::Val, cfg.input_size).unwrap();
    let plan = CheckpointPlan {
        dir: dir.path().join("ckpt"),
        meta: serde_json::json!({}),
    };
    std::fs::create_dir_all(&plan.dir).unwrap();
    let mut model = SegmentationModel::build(&cfg, 2).unwrap();
    let schedule = TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    trainer::train(
        &mut model,
        &train_cache,
        &val_cache,
        &schedule,
        Some(&plan),
        |_, _| ControlFlow::Continue(()),
    )
    .unwrap();
    let live = trainer::evaluate(&mut model, &val_cache, 8, true).unwrap();
    let (mut reloaded, _meta) = SegmentationModel::load(&plan.last_path()).unwrap();
    let back = trainer::evaluate(&mut reloaded, &val_cache, 8, true).unwrap();
    let round_trip_equal =
        serde_json::to_string(&live).unwrap() == serde_json::to_string(&back).unwrap();

    report(
        9,
        "determinism",
        manifests_equal && round_trip_equal,
        &format!(
            "manifests byte-identical across regeneration ({} bytes); evaluation \
             report identical after checkpoint round trip (exact equality required)",
            first.len()
        ),
    );
}

#[test]
fn criterion_10_augmentation_mask_safety() {
    let (dir, manifest) = shed_cabin_corpus(21);
    let views: Vec<RenderedView> = manifest
        .samples
        .iter()
        .take(5)
        .map(|s| RenderedView {
            image: load_rgb(&image_path(dir.path(), &s.id)).unwrap(),
            mask: load_mask(&mask_path(dir.path(), &s.id)).unwrap(),
        })
        .collect();
    let owned = |ops: &[&str]| -> Vec<String> { ops.iter().map(|s| s.to_string()).collect() };
    let geometric = owned(&["random_rotate90", "transpose"]);
    let photometric = owned(&["clahe", "blur", "hue_saturation_value"]);
    let warps = owned(&["shift_scale_rotate", "optical_distortion", "grid_distortion"]);

    fn histogram(mask: &Mask) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &v in mask.iter() {
            h[v as usize] += 1;
        }
        h
    }
    fn value_set(mask: &Mask) -> BTreeSet<u8> {
        mask.iter().copied().collect()
    }

    let mut hist_ok = 0u32;
    for seed in 0..200u64 {
        let view = &views[(seed % 5) as usize];
        let out = augment(view, &geometric, seed).unwrap();
        hist_ok += u32::from(histogram(&out.mask) == histogram(&view.mask));
    }
    let mut bitwise_ok = 0u32;
    for seed in 0..150u64 {
        let view = &views[(seed % 5) as usize];
        let out = augment(view, &photometric, 1000 + seed).unwrap();
        bitwise_ok += u32::from(out.mask == view.mask);
    }
    let mut subset_ok = 0u32;
    for seed in 0..150u64 {
        let view = &views[(seed % 5) as usize];
        let out = augment(view, &warps, 2000 + seed).unwrap();
        subset_ok += u32::from(value_set(&out.mask).is_subset(&value_set(&view.mask)));
    }

    let pass = hist_ok == 200 && bitwise_ok == 150 && subset_ok == 150;
    report(
        10,
        "augmentation_mask_safety",
        pass,
        &format!(
            "500 randomized augmentations over 5 scenes: {hist_ok}/200 rotate90 and \
             transpose runs preserved class histograms, {bitwise_ok}/150 photometric \
             runs left masks bitwise unchanged, {subset_ok}/150 warp runs introduced \
             no new class values"
        ),
    );
}
