//! Dataset enumeration, manifest types and image/mask file IO.
//!
//! A dataset directory holds `images/<id>.png` (RGB), `masks/<id>.png`
//! (8-bit indexed, pixel value = class index) and a `manifest.json` listing
//! every sample. Masks carry the class palette so they are viewable
//! directly, but consumers read the raw index plane.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use super::house::{build_house, knockout, CubePlacement, HouseSpec, Stage};
use super::render::{render_view, RenderConfig, VALID_ANGLES};
use super::SceneError;
use crate::label::{LabelSpace, LabelSpaceMode};
use crate::viz::palette::class_palette;
use crate::{Mask, RgbImage};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub house: String,
    pub stage: Stage,
    pub angle_deg: u32,
    pub knockout_ids: Vec<u8>,
    pub split: Split,
    pub label_space_mode: LabelSpaceMode,
    pub num_classes: usize,
}

impl SampleRecord {
    /// Key identifying the underlying rendered scene. Augmented copies share
    /// the key of their base sample, which is what grouped splitting uses to
    /// keep them in one split.
    pub fn scene_key(&self) -> String {
        let mut key = format!(
            "{}|{}|a{}",
            self.house,
            self.stage.as_str(),
            self.angle_deg
        );
        if !self.knockout_ids.is_empty() {
            key.push_str("|k");
            for (n, id) in self.knockout_ids.iter().enumerate() {
                if n > 0 {
                    key.push('-');
                }
                key.push_str(&id.to_string());
            }
        }
        key
    }

    /// Record for the n-th augmented copy of this sample.
    pub fn augmented(&self, n: usize) -> SampleRecord {
        SampleRecord {
            id: format!("{}_aug_{}", self.id, n),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub label_space: LabelSpace,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn new(seed: u64, label_space: LabelSpace, samples: Vec<SampleRecord>) -> Self {
        DatasetManifest {
            version: MANIFEST_VERSION,
            seed,
            config_hash: String::new(),
            label_space,
            samples,
        }
    }

    pub fn split_samples(&self, split: Split) -> Vec<&SampleRecord> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    /// (train, val, test) sample counts.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in &self.samples {
            match s.split {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        let file = File::create(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self).map_err(|e| SceneError::Manifest {
            reason: e.to_string(),
        })?;
        w.write_all(b"\n").and_then(|()| w.flush()).map_err(|source| {
            SceneError::Io {
                path: path.to_path_buf(),
                source,
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let file = File::open(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| SceneError::Manifest {
                reason: format!("{}: {e}", path.display()),
            })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(SceneError::Manifest {
                reason: format!(
                    "unsupported manifest version {} (expected {MANIFEST_VERSION})",
                    manifest.version
                ),
            });
        }
        Ok(manifest)
    }
}

/// Everything `generate_dataset` needs: which houses and views to render,
/// knockout plans per house, labeling and render settings.
#[derive(Clone, Debug)]
pub struct GenerateSpec {
    pub houses: Vec<HouseSpec>,
    pub stages: Vec<Stage>,
    pub angles: Vec<u32>,
    pub knockout_plans: BTreeMap<String, Vec<Vec<u8>>>,
    pub label_space: LabelSpace,
    pub render: RenderConfig,
    pub seed: u64,
}

impl GenerateSpec {
    /// The standard corpus: every library house, all stages and angles, the
    /// default knockout plans.
    pub fn standard(label_space: LabelSpace, render: RenderConfig, seed: u64) -> Self {
        let houses = super::house::house_library();
        let knockout_plans = houses
            .iter()
            .map(|h| (h.name.clone(), super::house::default_knockout_plans(&h.name)))
            .filter(|(_, plans)| !plans.is_empty())
            .collect();
        GenerateSpec {
            houses,
            stages: super::house::ALL_STAGES.to_vec(),
            angles: VALID_ANGLES.to_vec(),
            knockout_plans,
            label_space,
            render,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.houses.is_empty() || self.stages.is_empty() || self.angles.is_empty() {
            return Err(SceneError::EmptyDataset);
        }
        let mut names = BTreeSet::new();
        for h in &self.houses {
            h.validate()?;
            if !names.insert(h.name.as_str()) {
                return Err(SceneError::DuplicateHouse {
                    house: h.name.clone(),
                });
            }
        }
        for &a in &self.angles {
            if !VALID_ANGLES.contains(&a) {
                return Err(SceneError::InvalidAngle { angle_deg: a });
            }
        }
        for (name, plans) in &self.knockout_plans {
            let house = self
                .houses
                .iter()
                .find(|h| &h.name == name)
                .ok_or_else(|| SceneError::InvalidKnockoutPlan {
                    house: name.clone(),
                    plan: Vec::new(),
                    reason: "plans reference an unknown house".into(),
                })?;
            let full = build_house(house, Stage::FullHouse)?;
            for plan in plans {
                knockout(&full, plan).map_err(|e| SceneError::InvalidKnockoutPlan {
                    house: name.clone(),
                    plan: plan.clone(),
                    reason: e.to_string(),
                })?;
            }
        }
        Ok(())
    }
}

fn sample_id(house: &str, stage: Stage, angle_deg: u32, plan: &[u8]) -> String {
    let mut id = format!("{house}_{}_a{angle_deg:02}", stage.as_str());
    if !plan.is_empty() {
        id.push_str("_k");
        for (n, cube) in plan.iter().enumerate() {
            if n > 0 {
                id.push('-');
            }
            id.push_str(&cube.to_string());
        }
    }
    id
}

fn plan_applies(plan: &[u8], scene: &[CubePlacement]) -> bool {
    plan.iter().all(|id| scene.iter().any(|p| p.cube_id == *id))
}

/// Renders every enumerated scene view to `out_root` and returns the
/// manifest (all samples initially in the train split; splitting happens
/// downstream).
///
/// Enumeration order is deterministic: houses as given, stages in the given
/// order, the no-knockout plan first then configured plans, angles
/// ascending. Stages empty for a house are skipped, as are plans whose cube
/// ids are absent from a stage.
pub fn generate_dataset(
    spec: &GenerateSpec,
    out_root: &Path,
) -> Result<DatasetManifest, SceneError> {
    spec.validate()?;
    let mut angles = spec.angles.clone();
    angles.sort_unstable();
    angles.dedup();
    let mut stages = Vec::new();
    for &s in &spec.stages {
        if !stages.contains(&s) {
            stages.push(s);
        }
    }

    let images_dir = out_root.join("images");
    let masks_dir = out_root.join("masks");
    for dir in [&images_dir, &masks_dir] {
        fs::create_dir_all(dir).map_err(|source| SceneError::Io {
            path: dir.clone(),
            source,
        })?;
    }

    let no_knockout: Vec<u8> = Vec::new();
    let mut samples = Vec::new();
    for house in &spec.houses {
        let house_plans = spec.knockout_plans.get(&house.name);
        for &stage in &stages {
            let staged = match build_house(house, stage) {
                Ok(p) => p,
                Err(SceneError::EmptyStage { .. }) => continue,
                Err(e) => return Err(e),
            };
            let plans = std::iter::once(&no_knockout)
                .chain(house_plans.into_iter().flatten())
                .filter(|plan| plan_applies(plan, &staged));
            for plan in plans {
                let scene = knockout(&staged, plan)?;
                for &angle in &angles {
                    let view = render_view(&scene, angle, &spec.label_space, &spec.render)?;
                    let id = sample_id(&house.name, stage, angle, plan);
                    save_rgb(&images_dir.join(format!("{id}.png")), &view.image)?;
                    save_mask(
                        &masks_dir.join(format!("{id}.png")),
                        &view.mask,
                        spec.label_space.num_classes,
                    )?;
                    samples.push(SampleRecord {
                        id,
                        house: house.name.clone(),
                        stage,
                        angle_deg: angle,
                        knockout_ids: plan.clone(),
                        split: Split::Train,
                        label_space_mode: spec.label_space.mode,
                        num_classes: spec.label_space.num_classes,
                    });
                }
            }
        }
    }
    if samples.is_empty() {
        return Err(SceneError::EmptyDataset);
    }
    Ok(DatasetManifest::new(spec.seed, spec.label_space.clone(), samples))
}

pub fn image_path(root: &Path, id: &str) -> PathBuf {
    root.join("images").join(format!("{id}.png"))
}

pub fn mask_path(root: &Path, id: &str) -> PathBuf {
    root.join("masks").join(format!("{id}.png"))
}

pub fn save_rgb(path: &Path, image: &RgbImage) -> Result<(), SceneError> {
    let (h, w, c) = image.dim();
    assert_eq!(c, 3, "expected an (H, W, 3) image");
    let data = image.as_standard_layout().iter().copied().collect();
    let buf = image::RgbImage::from_raw(w as u32, h as u32, data)
        .expect("buffer sized from dims");
    buf.save(path).map_err(|e| SceneError::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, SceneError> {
    let img = image::open(path)
        .map_err(|e| SceneError::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Array3::from_shape_vec((h as usize, w as usize, 3), img.into_raw()).map_err(|e| {
        SceneError::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })
}

/// Writes a mask as an 8-bit indexed PNG whose palette is the class palette,
/// so the file doubles as a viewable label visualization.
pub fn save_mask(path: &Path, mask: &Mask, num_classes: usize) -> Result<(), SceneError> {
    let (h, w) = mask.dim();
    let io_err = |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let palette: Vec<u8> = class_palette(num_classes).into_iter().flatten().collect();
    enc.set_palette(palette);
    let png_err = |e: png::EncodingError| SceneError::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = enc.write_header().map_err(png_err)?;
    let data = mask.as_standard_layout();
    writer
        .write_image_data(data.as_slice().expect("standard layout"))
        .map_err(png_err)
}

/// Reads a mask PNG written by [`save_mask`]: the raw index plane, not the
/// palette colors.
pub fn load_mask(path: &Path) -> Result<Mask, SceneError> {
    let img_err = |reason: String| SceneError::Image {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| img_err(e.to_string()))?;
    let buf_size = reader
        .output_buffer_size()
        .ok_or_else(|| img_err("mask dimensions overflow".into()))?;
    let mut buf = vec![0u8; buf_size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| img_err(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight
        || !matches!(
            info.color_type,
            png::ColorType::Indexed | png::ColorType::Grayscale
        )
    {
        return Err(img_err(format!(
            "expected an 8-bit indexed or grayscale mask, got {:?}/{:?}",
            info.color_type, info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Array2::from_shape_vec((info.height as usize, info.width as usize), buf)
        .map_err(|e| img_err(e.to_string()))
}
