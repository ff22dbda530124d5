//! The three segmentation architectures, built from scratch on the tape
//! engine.
//!
//! Every model follows one contract: batched single-channel images
//! `(N, H, W, 1)` with values in [0, 1] go in, per-pixel class probability
//! maps `(N, H, W, C)` come out, same spatial size, softmax-normalized.

mod linknet;
mod pspnet;
mod resnet;
mod unet;

use std::path::{Path, PathBuf};

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cubeseg_nn::graph::{Mode, NodeId, Tape};
use cubeseg_nn::loss::cross_entropy;
use cubeseg_nn::params::CheckpointError;
use cubeseg_nn::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    UnetLight,
    Linknet,
    Pspnet,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::UnetLight, Arch::Linknet, Arch::Pspnet];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::UnetLight => "unet_light",
            Arch::Linknet => "linknet",
            Arch::Pspnet => "pspnet",
        }
    }

    /// Input resolution the training protocol fixes for this architecture.
    pub fn default_input(self) -> (usize, usize) {
        match self {
            Arch::UnetLight | Arch::Linknet => (128, 128),
            Arch::Pspnet => (192, 192),
        }
    }

    /// Downsampling factor the input must be divisible by.
    fn stride_factor(self) -> usize {
        match self {
            Arch::UnetLight => 16,
            Arch::Linknet | Arch::Pspnet => 32,
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub input_size: (usize, usize),
    pub in_channels: usize,
    pub num_classes: usize,
    /// First encoder width of unet_light; deeper levels double it.
    pub base_width: usize,
    /// (encoder, bottleneck, decoder) dropout rates. Ignored by pspnet.
    pub dropout: (f32, f32, f32),
    /// Pyramid pooling bin sizes. pspnet only.
    pub ppm_bins: Vec<usize>,
}

impl ModelConfig {
    pub fn new(arch: Arch, num_classes: usize) -> Self {
        ModelConfig {
            arch,
            input_size: arch.default_input(),
            in_channels: 1,
            num_classes,
            base_width: 16,
            dropout: (0.1, 0.3, 0.2),
            ppm_bins: vec![1, 2, 3, 6],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::Config { reason });
        if self.num_classes < 2 {
            return bad(format!("num_classes {} < 2", self.num_classes));
        }
        if self.in_channels == 0 {
            return bad("in_channels must be at least 1".into());
        }
        if self.base_width == 0 {
            return bad("base_width must be at least 1".into());
        }
        let (de, db, dd) = self.dropout;
        if [de, db, dd].iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad(format!("dropout rates {:?} must lie in [0, 1)", self.dropout));
        }
        let (h, w) = self.input_size;
        let factor = self.arch.stride_factor();
        if h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
            return bad(format!(
                "{} needs input divisible by {factor}, got {h}x{w}",
                self.arch
            ));
        }
        if self.arch == Arch::Pspnet {
            if self.ppm_bins.is_empty() {
                return bad("pspnet needs at least one ppm bin".into());
            }
            let (gh, gw) = (h / 32, w / 32);
            for &bin in &self.ppm_bins {
                if bin == 0 || gh % bin != 0 || gw % bin != 0 {
                    return bad(format!(
                        "ppm bin {bin} does not divide the {gh}x{gw} backbone grid \
                         (input {h}x{w} / 32)"
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {reason}")]
    Config { reason: String },

    #[error("input shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: CheckpointError,
    },

    #[error("checkpoint {path}: {reason}")]
    BadCheckpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

enum Graph {
    UnetLight(unet::UnetLight),
    Linknet(linknet::Linknet),
    Pspnet(pspnet::Pspnet),
}

impl Graph {
    fn forward(&self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Graph::UnetLight(g) => g.forward(tape, x),
            Graph::Linknet(g) => g.forward(tape, x),
            Graph::Pspnet(g) => g.forward(tape, x),
        }
    }
}

pub struct SegmentationModel {
    cfg: ModelConfig,
    store: ParamStore,
    graph: Graph,
}

impl SegmentationModel {
    /// Builds the configured architecture with He-uniform weights drawn from
    /// `seed`. The same config and seed always give the same parameters.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = match cfg.arch {
            Arch::UnetLight => Graph::UnetLight(unet::UnetLight::new(&mut store, &mut rng, cfg)),
            Arch::Linknet => Graph::Linknet(linknet::Linknet::new(&mut store, &mut rng, cfg)),
            Arch::Pspnet => Graph::Pspnet(pspnet::Pspnet::new(&mut store, &mut rng, cfg)),
        };
        Ok(SegmentationModel {
            cfg: cfg.clone(),
            store,
            graph,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Total trainable scalars.
    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check_images(&self, images: &Array4<f32>) -> Result<(), ModelError> {
        let (n, h, w, c) = images.dim();
        let (eh, ew) = self.cfg.input_size;
        if n == 0 || (h, w) != (eh, ew) || c != self.cfg.in_channels {
            return Err(ModelError::Shape {
                expected: format!("(N>0, {eh}, {ew}, {})", self.cfg.in_channels),
                got: format!("({n}, {h}, {w}, {c})"),
            });
        }
        Ok(())
    }

    fn run(&mut self, images: &Array4<f32>, mode: Mode, rng: &mut ChaCha8Rng) -> Array4<f32> {
        let x = nhwc_to_nchw(images);
        let mut tape = Tape::new(&mut self.store, mode, rng);
        let xin = tape.input(x);
        let out = self.graph.forward(&mut tape, xin);
        nchw_to_nhwc(tape.value(out))
    }

    /// Evaluation-mode probabilities: dropout off, batch norm on running
    /// statistics. Deterministic and side-effect free.
    pub fn forward(&mut self, images: &Array4<f32>) -> Result<Array4<f32>, ModelError> {
        self.check_images(images)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.run(images, Mode::Eval, &mut rng))
    }

    /// Train-mode probabilities (stochastic layers active, batch-norm
    /// buffers updated) without gradient accumulation.
    pub fn forward_train(
        &mut self,
        images: &Array4<f32>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array4<f32>, ModelError> {
        self.check_images(images)?;
        Ok(self.run(images, Mode::Train, rng))
    }

    /// One optimization-ready pass: train-mode forward, cross-entropy against
    /// one-hot targets, backward. Gradients are left in the store for the
    /// caller's optimizer step. Returns the loss and the forward
    /// probabilities (useful for running training metrics).
    pub fn train_step(
        &mut self,
        images: &Array4<f32>,
        targets_onehot: &Array4<f32>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Array4<f32>), ModelError> {
        self.check_images(images)?;
        let (n, h, w, _) = images.dim();
        let want = (n, h, w, self.cfg.num_classes);
        if targets_onehot.dim() != want {
            return Err(ModelError::Shape {
                expected: format!("{want:?}"),
                got: format!("{:?}", targets_onehot.dim()),
            });
        }
        let x = nhwc_to_nchw(images);
        let t = nhwc_to_nchw(targets_onehot);
        self.store.zero_grads();
        let mut tape = Tape::new(&mut self.store, Mode::Train, rng);
        let xin = tape.input(x);
        let out = self.graph.forward(&mut tape, xin);
        let (loss, grad) = cross_entropy(tape.value(out), &t);
        let probs = tape.value(out).clone();
        tape.backward(out, grad);
        Ok((loss, nchw_to_nhwc(&probs)))
    }

    /// Writes parameters, buffers, the model config and `extra` metadata.
    pub fn save(&self, path: &Path, extra: &serde_json::Value) -> Result<(), ModelError> {
        let meta = serde_json::json!({ "config": self.cfg, "extra": extra });
        let file = std::fs::File::create(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.store
            .save(std::io::BufWriter::new(file), &meta)
            .map_err(|source| ModelError::Checkpoint {
                path: path.to_path_buf(),
                source,
            })
    }

    /// Rebuilds the model recorded in a checkpoint and loads its weights.
    /// Returns the model and the `extra` metadata stored alongside.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), ModelError> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let ck = |source| ModelError::Checkpoint {
            path: path.to_path_buf(),
            source,
        };
        let meta = ParamStore::read_meta(bytes.as_slice()).map_err(ck)?;
        let cfg: ModelConfig =
            serde_json::from_value(meta["config"].clone()).map_err(|e| ModelError::BadCheckpoint {
                path: path.to_path_buf(),
                reason: format!("unreadable model config: {e}"),
            })?;
        let mut model = Self::build(&cfg, 0)?;
        let meta = model.store.load(bytes.as_slice()).map_err(ck)?;
        Ok((model, meta["extra"].clone()))
    }
}

pub(crate) fn nhwc_to_nchw(x: &Array4<f32>) -> Tensor {
    x.view()
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .to_owned()
}

pub(crate) fn nchw_to_nhwc(x: &Tensor) -> Array4<f32> {
    x.view()
        .permuted_axes([0, 2, 3, 1])
        .as_standard_layout()
        .to_owned()
}
