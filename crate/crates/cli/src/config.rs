//! The run config file: schema, defaults, validation and hashing.
//!
//! One TOML file drives every command. Unknown keys are rejected so typos
//! fail loudly instead of silently falling back to defaults. The identity of
//! a run is the hash of the resolved `[dataset]`+`[model]`+`[train]`
//! sections; it is stamped into the manifest, every checkpoint and every
//! report, and `evaluate` refuses checkpoints whose hash does not match the
//! config it is given. `[report]` stays out of the hash so relocating
//! outputs never invalidates a trained model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cubeseg_core::datapipe::AUGMENTATION_OPS;
use cubeseg_core::label::{LabelSpace, LabelSpaceMode};
use cubeseg_core::models::{Arch, ModelConfig};
use cubeseg_core::scenegen::{
    house_library, GenerateSpec, RenderConfig, Stage, ALL_STAGES, VALID_ANGLES,
};
use cubeseg_core::trainer::TrainConfig;

use crate::CliError;

/// Environment variable that overrides `[report] output_dir`.
pub const REPORT_DIR_ENV: &str = "CUBESEG_REPORT_DIR";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub report: ReportSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Dataset directory, relative to the workdir.
    pub root: String,
    pub label_space: LabelSpaceMode,
    /// Which library houses to render. Default: all of them.
    pub houses: Vec<String>,
    /// Build stages to render. Default: all four.
    pub stages: Vec<Stage>,
    /// Camera angles in degrees, out of {0, 30, 60, 90}.
    pub angles: Vec<u32>,
    pub image_size: usize,
    pub cube_px: f64,
    pub palette_seed: u64,
    /// Seed for scene generation and augmentation parameter draws.
    pub seed: u64,
    /// Cube-removal variants per house. Absent: the built-in plans.
    /// An empty table disables knockouts entirely.
    pub knockout_plans: Option<BTreeMap<String, Vec<Vec<u8>>>>,
    pub augmentation: AugmentationSection,
    pub split: SplitSection,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let render = RenderConfig::default();
        DatasetSection {
            root: "data".into(),
            label_space: LabelSpaceMode::Semantic4,
            houses: house_library().into_iter().map(|h| h.name).collect(),
            stages: ALL_STAGES.to_vec(),
            angles: VALID_ANGLES.to_vec(),
            image_size: render.image_size,
            cube_px: render.cube_px,
            palette_seed: render.palette_seed,
            seed: 0,
            knockout_plans: None,
            augmentation: AugmentationSection::default(),
            split: SplitSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSection {
    /// Augmentation op names; empty disables expansion.
    pub ops: Vec<String>,
    /// Total size multiplier: 5 means each sample gains 4 augmented copies.
    pub factor: usize,
}

impl Default for AugmentationSection {
    fn default() -> Self {
        AugmentationSection {
            ops: AUGMENTATION_OPS.iter().map(|s| s.to_string()).collect(),
            factor: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Train/val/test fractions; must sum to 1.
    pub fractions: [f64; 3],
    /// Keep augmented copies of one scene in one split (recommended).
    pub grouped: bool,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            fractions: [0.8, 0.1, 0.1],
            grouped: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub arch: Arch,
    /// Default: 128x128 for unet_light and linknet, 192x192 for pspnet.
    pub input_size: Option<(usize, usize)>,
    /// Default: the label space's class count.
    pub num_classes: Option<usize>,
    pub base_width: usize,
    /// (after encoder pools, after bottleneck, after decoder blocks)
    pub dropout: (f32, f32, f32),
    pub ppm_bins: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(Arch::UnetLight, 4);
        ModelSection {
            arch: Arch::UnetLight,
            input_size: None,
            num_classes: None,
            base_width: m.base_width,
            dropout: m.dropout,
            ppm_bins: m.ppm_bins,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Checkpoint directory, relative to the workdir.
    pub checkpoint_dir: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            lr: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            checkpoint_dir: "checkpoints".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Report directory, relative to the workdir; overridden by
    /// `CUBESEG_REPORT_DIR`.
    pub output_dir: String,
    /// Include class 0 in MeanIoU / macro-F1 aggregates.
    pub include_background: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            output_dir: "reports".into(),
            include_background: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        // toml's errors already carry the offending key and span
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let d = &self.dataset;
        if d.houses.is_empty() {
            return Err(CliError::Config("dataset.houses must not be empty".into()));
        }
        let library = house_library();
        for name in &d.houses {
            if !library.iter().any(|h| &h.name == name) {
                let known: Vec<&str> = library.iter().map(|h| h.name.as_str()).collect();
                return Err(CliError::Config(format!(
                    "unknown house {name:?} in dataset.houses (known: {})",
                    known.join(", ")
                )));
            }
        }
        if let Some(plans) = &d.knockout_plans {
            for house in plans.keys() {
                if !d.houses.contains(house) {
                    return Err(CliError::Config(format!(
                        "dataset.knockout_plans names {house:?}, which is not in dataset.houses"
                    )));
                }
            }
        }
        self.resolved_model()?.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn label_space(&self) -> LabelSpace {
        LabelSpace::new(self.dataset.label_space)
    }

    /// The concrete model config with per-arch and label-space defaults
    /// filled in.
    pub fn resolved_model(&self) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let mut cfg = ModelConfig::new(
            m.arch,
            m.num_classes.unwrap_or(self.label_space().num_classes),
        );
        cfg.input_size = m.input_size.unwrap_or(m.arch.default_input());
        cfg.base_width = m.base_width;
        cfg.dropout = m.dropout;
        cfg.ppm_bins = m.ppm_bins.clone();
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.lr,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            seed: self.train.seed,
        }
    }

    pub fn generate_spec(&self) -> Result<GenerateSpec, CliError> {
        let d = &self.dataset;
        let library = house_library();
        let houses: Vec<_> = library
            .into_iter()
            .filter(|h| d.houses.contains(&h.name))
            .collect();
        let mut spec = GenerateSpec::standard(
            self.label_space(),
            RenderConfig {
                image_size: d.image_size,
                cube_px: d.cube_px,
                palette_seed: d.palette_seed,
            },
            d.seed,
        );
        spec.houses = houses;
        spec.stages = d.stages.clone();
        spec.angles = d.angles.clone();
        match &d.knockout_plans {
            Some(plans) => spec.knockout_plans = plans.clone(),
            None => spec
                .knockout_plans
                .retain(|house, _| d.houses.contains(house)),
        }
        Ok(spec)
    }

    /// Hash of the resolved dataset+model+train sections (report paths
    /// excluded): the identity stamped into manifests, checkpoints and
    /// reports.
    pub fn hash(&self) -> Result<String, CliError> {
        let identity = serde_json::json!({
            "dataset": self.dataset,
            "model": self.resolved_model()?,
            "train": self.train,
        });
        Ok(digest(&identity.to_string()))
    }

    /// Hash of the dataset section alone: decides whether a dataset on disk
    /// is up to date, independent of model and training settings.
    pub fn dataset_hash(&self) -> String {
        let identity = serde_json::to_string(&self.dataset).expect("section serializes");
        digest(&identity)
    }

    /// Report directory after the environment override and workdir
    /// resolution.
    pub fn report_dir(&self, workdir: &Path) -> PathBuf {
        match std::env::var_os(REPORT_DIR_ENV) {
            Some(dir) => workdir.join(dir),
            None => workdir.join(&self.report.output_dir),
        }
    }
}

fn digest(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let out = hasher.finalize();
    // 16 hex chars are plenty for telling runs apart
    out[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_an_empty_file() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.dataset.split.fractions, [0.8, 0.1, 0.1]);
        assert_eq!(cfg.dataset.augmentation.factor, 5);
        assert_eq!(cfg.dataset.augmentation.ops.len(), 8);
        let model = cfg.resolved_model().unwrap();
        assert_eq!(model.input_size, (128, 128));
        assert_eq!(model.num_classes, 4);
    }

    #[test]
    fn pspnet_defaults_to_its_own_input_size() {
        let cfg: RunConfig = toml::from_str("[model]\narch = \"pspnet\"").unwrap();
        assert_eq!(cfg.resolved_model().unwrap().input_size, (192, 192));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let err = toml::from_str::<RunConfig>("[train]\nlearning_rate = 0.1").unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = toml::from_str::<RunConfig>("[dataset]\nrooot = \"x\"").unwrap_err();
        assert!(err.to_string().contains("rooot"), "{err}");
    }

    #[test]
    fn hash_ignores_report_but_not_train_settings() {
        let a: RunConfig = toml::from_str("").unwrap();
        let b: RunConfig = toml::from_str("[report]\noutput_dir = \"elsewhere\"").unwrap();
        let c: RunConfig = toml::from_str("[train]\nlr = 0.01").unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        // dataset hash moves only with the dataset section
        assert_eq!(a.dataset_hash(), c.dataset_hash());
        let d: RunConfig = toml::from_str("[dataset]\nseed = 9").unwrap();
        assert_ne!(a.dataset_hash(), d.dataset_hash());
    }

    #[test]
    fn explicit_defaults_hash_like_implicit_ones() {
        let a: RunConfig = toml::from_str("").unwrap();
        let b: RunConfig = toml::from_str("[model]\nnum_classes = 4").unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn bad_houses_and_bad_models_are_config_errors() {
        let cfg: RunConfig = toml::from_str("[dataset]\nhouses = [\"mansion\"]").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: RunConfig =
            toml::from_str("[model]\narch = \"pspnet\"\ninput_size = [128, 128]").unwrap();
        let err = cfg.validate().err().unwrap();
        assert!(err.to_string().contains("divide"), "{err}");
    }
}
