//! Training harness: mini-batch Adam over the data pipeline with per-epoch
//! validation, best/last checkpointing, learning curves, evaluation and
//! prediction.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cubeseg_nn::loss::cross_entropy;
use cubeseg_nn::optim::{Adam, AdamConfig};

use crate::datapipe::{BatchTensor, DataError, DatasetCache};
use crate::metrics::{ConfusionMatrix, MetricsError, MetricsReport};
use crate::models::{nhwc_to_nchw, ModelConfig, ModelError, SegmentationModel};
use crate::scenegen::SceneError;
use crate::viz::{line_chart, Series};
use crate::Mask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 16,
            epochs: 100,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::Config {
                reason: format!("learning rate {} must be positive", self.learning_rate),
            });
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TrainError::Config {
                reason: "batch_size and epochs must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training diverged: non-finite loss at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("invalid training config: {reason}")]
    Config { reason: String },

    #[error("model and dataset disagree: {reason}")]
    Mismatch { reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
    /// Running mean IoU over the training forward passes (dropout active),
    /// the cheap in-loop analog of a one-hot IoU accuracy metric.
    pub train_mean_iou: f64,
    /// Mean IoU of an evaluation-mode pass over the validation split.
    pub val_mean_iou: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn save_json(&self, path: &Path) -> Result<(), TrainError> {
        let io = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = serde_json::to_string_pretty(self).expect("history serializes");
        std::fs::write(path, text).map_err(io)
    }

    pub fn load_json(path: &Path) -> Result<Self, TrainError> {
        let io = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let bytes = std::fs::read(path).map_err(io)?;
        serde_json::from_slice(&bytes).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    /// Renders the loss and mean-IoU curves (train and val series each).
    pub fn render_curves(&self, loss_path: &Path, iou_path: &Path) -> Result<(), TrainError> {
        let grab = |f: fn(&EpochStats) -> f64| -> Vec<f64> { self.epochs.iter().map(f).collect() };
        let (tl, vl) = (grab(|e| e.train_loss), grab(|e| e.val_loss));
        line_chart(
            loss_path,
            "cross-entropy loss",
            "loss",
            &[
                Series { label: "train", color: [224, 122, 40], values: &tl },
                Series { label: "val", color: [66, 133, 244], values: &vl },
            ],
        )?;
        let (ti, vi) = (grab(|e| e.train_mean_iou), grab(|e| e.val_mean_iou));
        line_chart(
            iou_path,
            "mean IoU",
            "mean IoU",
            &[
                Series { label: "train", color: [224, 122, 40], values: &ti },
                Series { label: "val", color: [66, 133, 244], values: &vi },
            ],
        )?;
        Ok(())
    }
}

/// Where checkpoints go and what run metadata they carry.
pub struct CheckpointPlan {
    pub dir: PathBuf,
    /// Merged into every checkpoint's metadata (config hash and the like).
    pub meta: serde_json::Value,
}

impl CheckpointPlan {
    pub fn best_path(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }

    pub fn last_path(&self) -> PathBuf {
        self.dir.join("last.ckpt")
    }

    fn meta_for(&self, kind: &str, epoch: usize, val_mean_iou: f64) -> serde_json::Value {
        let mut obj = match &self.meta {
            serde_json::Value::Object(m) => m.clone(),
            _ => serde_json::Map::new(),
        };
        obj.insert("kind".into(), kind.into());
        obj.insert("epoch".into(), epoch.into());
        obj.insert("val_mean_iou".into(), val_mean_iou.into());
        serde_json::Value::Object(obj)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    /// 1-based epoch whose validation mean IoU was highest.
    pub best_epoch: usize,
    pub best_val_mean_iou: f64,
}

fn check_compatible(
    model: &SegmentationModel,
    data: &DatasetCache,
    what: &str,
) -> Result<(), TrainError> {
    let cfg = model.config();
    if data.num_classes() != cfg.num_classes {
        return Err(TrainError::Mismatch {
            reason: format!(
                "{what} split has {} classes, model expects {}",
                data.num_classes(),
                cfg.num_classes
            ),
        });
    }
    let got = data.image(0).dim();
    if got != cfg.input_size {
        return Err(TrainError::Mismatch {
            reason: format!(
                "{what} images are {}x{}, model expects {}x{}",
                got.0, got.1, cfg.input_size.0, cfg.input_size.1
            ),
        });
    }
    Ok(())
}

/// Runs `cfg.epochs` epochs of Adam on cross-entropy. Training batches are
/// reshuffled every epoch from the run seed; validation runs after each
/// epoch in evaluation mode. With a [`CheckpointPlan`], the best validation
/// mean-IoU weights and the final weights are written to `best.ckpt` and
/// `last.ckpt`. `progress` fires after every epoch; returning
/// `ControlFlow::Break` ends the run early with the checkpoints and history
/// accumulated so far.
pub fn train(
    model: &mut SegmentationModel,
    train_data: &DatasetCache,
    val_data: &DatasetCache,
    cfg: &TrainConfig,
    checkpoints: Option<&CheckpointPlan>,
    mut progress: impl FnMut(usize, &EpochStats) -> ControlFlow<()>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    check_compatible(model, train_data, "train")?;
    check_compatible(model, val_data, "val")?;

    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        model.store(),
    );
    // separate streams so batch order does not depend on dropout draws
    let mut step_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let num_classes = model.config().num_classes;
    let mut history = TrainHistory::default();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut last_val = 0.0;
    let mut last_epoch = cfg.epochs;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        let mut order_rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut order_rng);

        let mut loss_sum = 0.0;
        let mut train_cm = ConfusionMatrix::new(num_classes);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train_data.batch(chunk);
            let (loss, probs) =
                model.train_step(&batch.images, &batch.masks_onehot, &mut step_rng)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, step });
            }
            adam.step(model.store_mut());
            loss_sum += loss * chunk.len() as f64;
            for (bi, &idx) in chunk.iter().enumerate() {
                train_cm.accumulate(&argmax_mask(&probs, bi), train_data.mask(idx))?;
            }
        }

        let (val_loss, val_cm) = validation_pass(model, val_data, cfg.batch_size)?;
        let stats = EpochStats {
            train_loss: loss_sum / train_data.len() as f64,
            val_loss,
            train_mean_iou: train_cm.mean_iou(true)?,
            val_mean_iou: val_cm.mean_iou(true)?,
            seconds: started.elapsed().as_secs_f64(),
        };
        last_val = stats.val_mean_iou;
        if stats.val_mean_iou > best_val {
            best_val = stats.val_mean_iou;
            best_epoch = epoch;
            if let Some(plan) = checkpoints {
                model.save(
                    &plan.best_path(),
                    &plan.meta_for("best", epoch, stats.val_mean_iou),
                )?;
            }
        }
        let flow = progress(epoch, &stats);
        history.epochs.push(stats);
        if flow.is_break() {
            last_epoch = epoch;
            break;
        }
    }

    if let Some(plan) = checkpoints {
        model.save(
            &plan.last_path(),
            &plan.meta_for("last", last_epoch, last_val),
        )?;
    }
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_mean_iou: best_val,
    })
}

fn validation_pass(
    model: &mut SegmentationModel,
    data: &DatasetCache,
    batch_size: usize,
) -> Result<(f64, ConfusionMatrix), TrainError> {
    let mut cm = ConfusionMatrix::new(model.config().num_classes);
    let mut loss_sum = 0.0;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let batch = data.batch(chunk);
        let probs = model.forward(&batch.images)?;
        let (loss, _) = cross_entropy(&nhwc_to_nchw(&probs), &nhwc_to_nchw(&batch.masks_onehot));
        loss_sum += loss * chunk.len() as f64;
        for (bi, &idx) in chunk.iter().enumerate() {
            cm.accumulate(&argmax_mask(&probs, bi), data.mask(idx))?;
        }
    }
    Ok((loss_sum / data.len() as f64, cm))
}

/// Evaluation-mode pass over a whole split, accumulated into one global
/// confusion matrix.
pub fn evaluate(
    model: &mut SegmentationModel,
    data: &DatasetCache,
    batch_size: usize,
    include_background: bool,
) -> Result<MetricsReport, TrainError> {
    if batch_size == 0 {
        return Err(TrainError::Config {
            reason: "batch_size must be at least 1".into(),
        });
    }
    check_compatible(model, data, "eval")?;
    let mut cm = ConfusionMatrix::new(model.config().num_classes);
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size) {
        let batch = data.batch(chunk);
        let probs = model.forward(&batch.images)?;
        for (bi, &idx) in chunk.iter().enumerate() {
            cm.accumulate(&argmax_mask(&probs, bi), data.mask(idx))?;
        }
    }
    Ok(MetricsReport::from_confusion(&cm, include_background)?)
}

/// Per-pixel argmax over the class axis of sample `n`; exact ties go to the
/// lowest class index.
pub fn argmax_mask(probs: &Array4<f32>, n: usize) -> Mask {
    let (_, h, w, c) = probs.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut best = 0usize;
        let mut best_v = probs[(n, y, x, 0)];
        for ci in 1..c {
            let v = probs[(n, y, x, ci)];
            if v > best_v {
                best_v = v;
                best = ci;
            }
        }
        best as u8
    })
}

/// Predicted class mask for a single preprocessed image (values in [0, 1]).
pub fn predict(model: &mut SegmentationModel, image: &Array2<f32>) -> Result<Mask, TrainError> {
    let (h, w) = image.dim();
    let input = Array4::from_shape_fn((1, h, w, 1), |(_, y, x, _)| image[(y, x)]);
    let probs = model.forward(&input)?;
    Ok(argmax_mask(&probs, 0))
}

/// Trains a fresh model on one batch only and returns the per-step loss
/// trace; the memorization probe for optimization plumbing. Stops early once
/// the loss drops below `stop_below`.
pub fn sanity_overfit(
    cfg: &ModelConfig,
    batch: &BatchTensor,
    steps: usize,
    seed: u64,
    stop_below: Option<f64>,
) -> Result<Vec<f64>, TrainError> {
    if batch.len() > 4 {
        return Err(TrainError::Config {
            reason: format!("overfit probe takes at most 4 samples, got {}", batch.len()),
        });
    }
    let mut model = SegmentationModel::build(cfg, seed)?;
    let mut adam = Adam::new(AdamConfig::default(), model.store());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let (loss, _) = model.train_step(&batch.images, &batch.masks_onehot, &mut rng)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch: 1, step });
        }
        adam.step(model.store_mut());
        trace.push(loss);
        if stop_below.is_some_and(|t| loss < t) {
            break;
        }
    }
    Ok(trace)
}
