//! Data pipeline: preprocessing, augmentation, grouped splits and batch
//! assembly.
//!
//! Augmentation happens in color at dataset-build time ([`expand_dataset`]
//! writes `_aug_<n>` copies next to their bases); grayscale conversion,
//! normalization and resizing happen at batch time. All functions are pure
//! given their seeds.

pub mod augment;

pub use augment::{augment, AUGMENTATION_OPS};

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scenegen::{
    image_path, load_mask, load_rgb, mask_path, save_mask, save_rgb, DatasetManifest,
    RenderedView, SampleRecord, SceneError, Split,
};
use crate::{Mask, RgbImage};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("mask value {value} not present in the observed label set")]
    UnknownLabel { value: u8 },

    #[error("mask value {value} out of range for {num_classes} classes")]
    LabelOutOfRange { value: u8, num_classes: usize },

    #[error("bad split fractions: {reason}")]
    BadFractions { reason: String },

    #[error("infeasible split: {reason}")]
    InfeasibleSplit { reason: String },

    #[error("unknown augmentation '{name}'")]
    UnknownAugmentation { name: String },

    #[error("split '{}' has no samples", split.as_str())]
    EmptySplit { split: Split },

    #[error("batch size must be at least 1")]
    ZeroBatchSize,

    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// One training batch: images (N, H, W, 1) in [0, 1] and one-hot masks
/// (N, H, W, num_classes) in {0, 1}.
#[derive(Clone, Debug)]
pub struct BatchTensor {
    pub images: Array4<f32>,
    pub masks_onehot: Array4<f32>,
}

impl BatchTensor {
    pub fn len(&self) -> usize {
        self.images.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Luminance conversion with the standard 0.299/0.587/0.114 weights,
/// rounded to nearest.
pub fn to_grayscale(image: &RgbImage) -> Result<Array2<u8>, DataError> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(DataError::Shape {
            expected: format!("({h}, {w}, 3)"),
            got: format!("({h}, {w}, {c})"),
        });
    }
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        let r = f64::from(image[(y, x, 0)]);
        let g = f64::from(image[(y, x, 1)]);
        let b = f64::from(image[(y, x, 2)]);
        (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
    }))
}

/// Rescales an 8-bit image to [0, 1] floats.
pub fn normalize(image: &Array2<u8>) -> Array2<f32> {
    image.mapv(|v| f32::from(v) / 255.0)
}

/// Relabels mask values to 0..K-1 by ascending rank within the observed
/// label set and returns the applied mapping (original -> new). Already
/// contiguous labels map to themselves.
pub fn remap_labels(
    mask: &Mask,
    observed_labels: &[u8],
) -> Result<(Mask, BTreeMap<u8, u8>), DataError> {
    let mut observed = observed_labels.to_vec();
    observed.sort_unstable();
    observed.dedup();
    let mut lut = [None::<u8>; 256];
    let mut mapping = BTreeMap::new();
    for (rank, &orig) in observed.iter().enumerate() {
        lut[orig as usize] = Some(rank as u8);
        mapping.insert(orig, rank as u8);
    }
    let mut out = Array2::zeros(mask.dim());
    for (dst, &src) in out.iter_mut().zip(mask.iter()) {
        *dst = lut[src as usize].ok_or(DataError::UnknownLabel { value: src })?;
    }
    Ok((out, mapping))
}

/// One-hot encodes a class mask into (H, W, C) floats.
pub fn one_hot(mask: &Mask, num_classes: usize) -> Result<Array3<f32>, DataError> {
    if let Some(&bad) = mask.iter().find(|&&v| v as usize >= num_classes) {
        return Err(DataError::LabelOutOfRange {
            value: bad,
            num_classes,
        });
    }
    let (h, w) = mask.dim();
    let mut out = Array3::zeros((h, w, num_classes));
    for y in 0..h {
        for x in 0..w {
            out[(y, x, mask[(y, x)] as usize)] = 1.0;
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<(), DataError> {
        let vals = [self.train, self.val, self.test];
        if vals.iter().any(|v| !(0.0..=1.0).contains(v)) || self.train == 0.0 {
            return Err(DataError::BadFractions {
                reason: format!("{self:?}: fractions must lie in [0, 1] with train > 0"),
            });
        }
        let sum: f64 = vals.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(DataError::BadFractions {
                reason: format!("{self:?}: sum {sum} is not 1"),
            });
        }
        Ok(())
    }
}

// Tolerance on achieved split fractions.
const SPLIT_TOLERANCE: f64 = 0.02;

/// Assigns train/val/test splits. With `grouped` set (the default pipeline),
/// assignment happens per base scene so augmented copies never cross splits;
/// otherwise every sample is its own group (the naive protocol).
///
/// Deterministic in `seed` and independent of manifest order: groups are
/// keyed and shuffled after sorting. Greedy assignment fills whichever split
/// is furthest below its target; if the result misses a requested fraction
/// by more than two points (an oversized group forced the overshoot), the
/// split is reported infeasible.
pub fn split_dataset(
    manifest: &DatasetManifest,
    fractions: SplitFractions,
    seed: u64,
    grouped: bool,
) -> Result<DatasetManifest, DataError> {
    fractions.validate()?;
    let samples = &manifest.samples;
    let total = samples.len();
    if total == 0 {
        return Err(DataError::InfeasibleSplit {
            reason: "manifest has no samples".into(),
        });
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| samples[a].id.cmp(&samples[b].id));
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for idx in order {
        let key = if grouped {
            samples[idx].scene_key()
        } else {
            samples[idx].id.clone()
        };
        groups.entry(key).or_default().push(idx);
    }
    let mut keys: Vec<&String> = groups.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);

    let targets = [
        fractions.train * total as f64,
        fractions.val * total as f64,
        fractions.test * total as f64,
    ];
    let mut assigned = [0usize; 3];
    let mut split_of = vec![Split::Train; total];
    for key in keys {
        let members = &groups[key];
        let mut best = 0;
        for s in 1..3 {
            if targets[s] - assigned[s] as f64 > targets[best] - assigned[best] as f64 + 1e-12 {
                best = s;
            }
        }
        let split = [Split::Train, Split::Val, Split::Test][best];
        assigned[best] += members.len();
        for &idx in members {
            split_of[idx] = split;
        }
    }

    for (s, name) in ["train", "val", "test"].iter().enumerate() {
        let achieved = assigned[s] as f64 / total as f64;
        let requested = targets[s] / total as f64;
        if (achieved - requested).abs() > SPLIT_TOLERANCE + 1e-12 {
            let largest = groups.values().map(Vec::len).max().unwrap_or(0);
            return Err(DataError::InfeasibleSplit {
                reason: format!(
                    "{name}: achieved {achieved:.3} vs requested {requested:.3} \
                     ({total} samples, largest group {largest})"
                ),
            });
        }
    }

    let mut out = manifest.clone();
    for (record, &split) in out.samples.iter_mut().zip(split_of.iter()) {
        record.split = split;
    }
    Ok(out)
}

fn derive_seed(seed: u64, id: &str, copy: usize) -> u64 {
    // FNV-1a over the id, mixed with the base seed and copy index
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h ^ seed.rotate_left(17) ^ (copy as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Expands the dataset on disk by `factor`: each base sample keeps its
/// record and gains `factor - 1` augmented copies written in the same layout
/// with `_aug_<n>` id suffixes, inserted right after their base in the
/// returned manifest. `factor = 1` is a no-op.
pub fn expand_dataset(
    manifest: &DatasetManifest,
    root: &Path,
    ops: &[String],
    factor: usize,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    for op in ops {
        if !AUGMENTATION_OPS.contains(&op.as_str()) {
            return Err(DataError::UnknownAugmentation { name: op.clone() });
        }
    }
    if factor <= 1 || ops.is_empty() {
        return Ok(manifest.clone());
    }
    let num_classes = manifest.label_space.num_classes;
    let mut samples: Vec<SampleRecord> = Vec::with_capacity(manifest.samples.len() * factor);
    for record in &manifest.samples {
        samples.push(record.clone());
        let view = RenderedView {
            image: load_rgb(&image_path(root, &record.id))?,
            mask: load_mask(&mask_path(root, &record.id))?,
        };
        for n in 1..factor {
            let aug_record = record.augmented(n);
            let out = augment(&view, ops, derive_seed(seed, &record.id, n))?;
            save_rgb(&image_path(root, &aug_record.id), &out.image)?;
            save_mask(&mask_path(root, &aug_record.id), &out.mask, num_classes)?;
            samples.push(aug_record);
        }
    }
    let mut out = manifest.clone();
    out.samples = samples;
    Ok(out)
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(src: &Array2<f32>, target: (usize, usize)) -> Array2<f32> {
    let (sh, sw) = src.dim();
    let (th, tw) = target;
    if (sh, sw) == (th, tw) {
        return src.clone();
    }
    let sy = sh as f32 / th as f32;
    let sx = sw as f32 / tw as f32;
    Array2::from_shape_fn((th, tw), |(y, x)| {
        let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f32);
        let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f32);
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let x1 = (x0 + 1).min(sw - 1);
        let wy = fy - y0 as f32;
        let wx = fx - x0 as f32;
        src[(y0, x0)] * (1.0 - wy) * (1.0 - wx)
            + src[(y0, x1)] * (1.0 - wy) * wx
            + src[(y1, x0)] * wy * (1.0 - wx)
            + src[(y1, x1)] * wy * wx
    })
}

/// Nearest-neighbor mask resize; output values are always a subset of the
/// input values.
pub fn resize_nearest(src: &Mask, target: (usize, usize)) -> Mask {
    let (sh, sw) = src.dim();
    let (th, tw) = target;
    if (sh, sw) == (th, tw) {
        return src.clone();
    }
    let sy = sh as f64 / th as f64;
    let sx = sw as f64 / tw as f64;
    Array2::from_shape_fn((th, tw), |(y, x)| {
        let iy = (((y as f64 + 0.5) * sy).floor() as usize).min(sh - 1);
        let ix = (((x as f64 + 0.5) * sx).floor() as usize).min(sw - 1);
        src[(iy, ix)]
    })
}

/// All samples of one split decoded, grayscaled, normalized and resized
/// once, ready for repeated batch assembly across epochs.
pub struct DatasetCache {
    ids: Vec<String>,
    images: Vec<Array2<f32>>,
    masks: Vec<Mask>,
    num_classes: usize,
}

impl DatasetCache {
    pub fn load(
        manifest: &DatasetManifest,
        root: &Path,
        split: Split,
        target_size: (usize, usize),
    ) -> Result<Self, DataError> {
        let num_classes = manifest.label_space.num_classes;
        let records = manifest.split_samples(split);
        if records.is_empty() {
            return Err(DataError::EmptySplit { split });
        }
        let mut ids = Vec::with_capacity(records.len());
        let mut images = Vec::with_capacity(records.len());
        let mut masks = Vec::with_capacity(records.len());
        for record in records {
            let rgb = load_rgb(&image_path(root, &record.id))?;
            let gray = normalize(&to_grayscale(&rgb)?);
            images.push(resize_bilinear(&gray, target_size));
            let mask = load_mask(&mask_path(root, &record.id))?;
            if let Some(&bad) = mask.iter().find(|&&v| v as usize >= num_classes) {
                return Err(DataError::LabelOutOfRange {
                    value: bad,
                    num_classes,
                });
            }
            masks.push(resize_nearest(&mask, target_size));
            ids.push(record.id.clone());
        }
        Ok(DatasetCache {
            ids,
            images,
            masks,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn mask(&self, index: usize) -> &Mask {
        &self.masks[index]
    }

    pub fn image(&self, index: usize) -> &Array2<f32> {
        &self.images[index]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Assembles the samples at `indices` into one batch.
    pub fn batch(&self, indices: &[usize]) -> BatchTensor {
        assert!(!indices.is_empty(), "empty batch requested");
        let (h, w) = self.images[indices[0]].dim();
        let n = indices.len();
        let mut images = Array4::zeros((n, h, w, 1));
        let mut masks_onehot = Array4::zeros((n, h, w, self.num_classes));
        for (bi, &idx) in indices.iter().enumerate() {
            let img = &self.images[idx];
            let mask = &self.masks[idx];
            for y in 0..h {
                for x in 0..w {
                    images[(bi, y, x, 0)] = img[(y, x)];
                    masks_onehot[(bi, y, x, mask[(y, x)] as usize)] = 1.0;
                }
            }
        }
        BatchTensor {
            images,
            masks_onehot,
        }
    }
}

/// Sequential batches over one split: grayscale-normalized resized images
/// with one-hot masks, final partial batch included.
pub fn make_batches(
    manifest: &DatasetManifest,
    root: &Path,
    split: Split,
    batch_size: usize,
    target_size: (usize, usize),
) -> Result<BatchStream, DataError> {
    if batch_size == 0 {
        return Err(DataError::ZeroBatchSize);
    }
    let cache = DatasetCache::load(manifest, root, split, target_size)?;
    Ok(BatchStream {
        cache,
        batch_size,
        cursor: 0,
    })
}

pub struct BatchStream {
    cache: DatasetCache,
    batch_size: usize,
    cursor: usize,
}

impl Iterator for BatchStream {
    type Item = BatchTensor;

    fn next(&mut self) -> Option<BatchTensor> {
        if self.cursor >= self.cache.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.cache.len());
        let indices: Vec<usize> = (self.cursor..end).collect();
        self.cursor = end;
        Some(self.cache.batch(&indices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{LabelSpace, LabelSpaceMode};
    use crate::scenegen::{generate_dataset, GenerateSpec, RenderConfig, Stage};
    use ndarray::Array3;

    #[test]
    fn grayscale_matches_an_independent_per_pixel_computation() {
        let image: RgbImage = Array3::from_shape_fn((13, 17, 3), |(y, x, c)| {
            ((y * 31 + x * 7 + c * 101) % 256) as u8
        });
        let gray = to_grayscale(&image).unwrap();
        for y in 0..13 {
            for x in 0..17 {
                let expect = (0.299 * f64::from(image[(y, x, 0)])
                    + 0.587 * f64::from(image[(y, x, 1)])
                    + 0.114 * f64::from(image[(y, x, 2)]))
                .round() as u8;
                assert_eq!(gray[(y, x)], expect);
            }
        }
    }

    #[test]
    fn grayscale_known_values() {
        let white = Array3::from_elem((2, 2, 3), 255u8);
        assert!(to_grayscale(&white).unwrap().iter().all(|&v| v == 255));
        let black = Array3::zeros((2, 2, 3));
        assert!(to_grayscale(&black).unwrap().iter().all(|&v| v == 0));
        let red = Array3::from_shape_fn((2, 2, 3), |(_, _, c)| if c == 0 { 255 } else { 0 });
        assert!(to_grayscale(&red).unwrap().iter().all(|&v| v == 76));
        let four = Array3::<u8>::zeros((2, 2, 4));
        assert!(matches!(to_grayscale(&four), Err(DataError::Shape { .. })));
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let img = Array2::from_shape_vec((1, 3), vec![0u8, 128, 255]).unwrap();
        let out = normalize(&img);
        assert_eq!(out[(0, 0)], 0.0);
        assert_eq!(out[(0, 2)], 1.0);
        assert!((out[(0, 1)] - 128.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn remap_sorted_rank_and_idempotence() {
        let mask = Array2::from_shape_vec((2, 3), vec![0u8, 5, 9, 9, 5, 0]).unwrap();
        let (out, mapping) = remap_labels(&mask, &[0, 5, 9]).unwrap();
        assert_eq!(out.as_slice().unwrap(), &[0, 1, 2, 2, 1, 0]);
        assert_eq!(mapping.get(&5), Some(&1));
        assert_eq!(mapping.get(&9), Some(&2));
        // already contiguous: identity
        let (again, _) = remap_labels(&out, &[0, 1, 2]).unwrap();
        assert_eq!(again, out);
        // unknown value errors
        let bad = Array2::from_elem((1, 1), 7u8);
        assert!(matches!(
            remap_labels(&bad, &[0, 5, 9]),
            Err(DataError::UnknownLabel { value: 7 })
        ));
    }

    #[test]
    fn one_hot_definition_and_inverse() {
        let mask = Array2::from_shape_vec((1, 1), vec![2u8]).unwrap();
        let oh = one_hot(&mask, 4).unwrap();
        assert_eq!(oh.as_slice().unwrap(), &[0.0, 0.0, 1.0, 0.0]);

        let mask = Array2::from_shape_fn((9, 7), |(y, x)| ((y * 7 + x) % 5) as u8);
        let oh = one_hot(&mask, 5).unwrap();
        for y in 0..9 {
            for x in 0..7 {
                let col: Vec<f32> = (0..5).map(|c| oh[(y, x, c)]).collect();
                assert_eq!(col.iter().sum::<f32>(), 1.0);
                let arg = col.iter().position(|&v| v == 1.0).unwrap();
                assert_eq!(arg as u8, mask[(y, x)]);
            }
        }
        assert!(matches!(
            one_hot(&mask, 3),
            Err(DataError::LabelOutOfRange { .. })
        ));
    }

    /// A synthetic manifest of `groups` base scenes with `copies` augmented
    /// variants each (ids chosen so lexicographic order interleaves groups).
    fn synthetic_manifest(groups: usize, copies: usize) -> DatasetManifest {
        let mut samples = Vec::new();
        for g in 0..groups {
            let base = SampleRecord {
                id: format!("house{g:03}_full_house_a00"),
                house: format!("house{g:03}"),
                stage: Stage::FullHouse,
                angle_deg: 0,
                knockout_ids: vec![],
                split: Split::Train,
                label_space_mode: LabelSpaceMode::Semantic4,
                num_classes: 4,
            };
            samples.push(base.clone());
            for n in 1..=copies {
                samples.push(base.augmented(n));
            }
        }
        DatasetManifest::new(7, LabelSpace::semantic4(), samples)
    }

    #[test]
    fn split_hits_exact_fractions_on_divisible_input() {
        let manifest = synthetic_manifest(100, 0);
        let out = split_dataset(&manifest, SplitFractions::default(), 3, true).unwrap();
        assert_eq!(out.split_counts(), (80, 10, 10));
    }

    #[test]
    fn split_is_deterministic_and_order_independent() {
        let manifest = synthetic_manifest(40, 2);
        let frac = SplitFractions::default();
        let a = split_dataset(&manifest, frac, 11, true).unwrap();
        let b = split_dataset(&manifest, frac, 11, true).unwrap();
        assert_eq!(a, b);

        let mut shuffled = manifest.clone();
        shuffled.samples.reverse();
        let c = split_dataset(&shuffled, frac, 11, true).unwrap();
        let split_of = |m: &DatasetManifest, id: &str| {
            m.samples.iter().find(|s| s.id == id).unwrap().split
        };
        for s in &a.samples {
            assert_eq!(split_of(&c, &s.id), s.split, "{} moved", s.id);
        }
        // a different seed gives a different assignment
        let d = split_dataset(&manifest, frac, 12, true).unwrap();
        assert_ne!(
            a.samples.iter().map(|s| s.split).collect::<Vec<_>>(),
            d.samples.iter().map(|s| s.split).collect::<Vec<_>>()
        );
    }

    #[test]
    fn grouped_split_never_separates_augmented_copies() {
        let manifest = synthetic_manifest(30, 4);
        let out = split_dataset(&manifest, SplitFractions::default(), 5, true).unwrap();
        let mut by_key: BTreeMap<String, Vec<Split>> = BTreeMap::new();
        for s in &out.samples {
            by_key.entry(s.scene_key()).or_default().push(s.split);
        }
        for (key, splits) in by_key {
            assert!(
                splits.windows(2).all(|w| w[0] == w[1]),
                "group {key} crosses splits"
            );
        }
        let (train, val, test) = out.split_counts();
        assert_eq!(train + val + test, 150);
        assert!((val as f64 / 150.0 - 0.1).abs() <= 0.02);
        assert!((test as f64 / 150.0 - 0.1).abs() <= 0.02);
    }

    #[test]
    fn ungrouped_split_treats_samples_individually() {
        let manifest = synthetic_manifest(20, 4);
        let out = split_dataset(&manifest, SplitFractions::default(), 2, false).unwrap();
        let (train, val, test) = out.split_counts();
        assert_eq!((train, val, test), (80, 10, 10));
        // with 20 groups of 5 and per-sample assignment, at least one group
        // almost surely crosses splits; verify the leakage actually happens
        let mut by_key: BTreeMap<String, Vec<Split>> = BTreeMap::new();
        for s in &out.samples {
            by_key.entry(s.scene_key()).or_default().push(s.split);
        }
        let crossed = by_key
            .values()
            .any(|splits| splits.windows(2).any(|w| w[0] != w[1]));
        assert!(crossed, "expected naive split to leak groups");
    }

    #[test]
    fn oversized_group_makes_the_split_infeasible() {
        let manifest = synthetic_manifest(1, 19);
        let err = split_dataset(&manifest, SplitFractions::default(), 1, true).unwrap_err();
        assert!(matches!(err, DataError::InfeasibleSplit { .. }));
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let manifest = synthetic_manifest(10, 0);
        for frac in [
            SplitFractions { train: 0.5, val: 0.2, test: 0.2 },
            SplitFractions { train: 0.0, val: 0.5, test: 0.5 },
            SplitFractions { train: 1.2, val: -0.1, test: -0.1 },
        ] {
            assert!(matches!(
                split_dataset(&manifest, frac, 1, true),
                Err(DataError::BadFractions { .. })
            ));
        }
    }

    fn tiny_dataset(dir: &Path) -> DatasetManifest {
        let mut spec = GenerateSpec::standard(
            LabelSpace::semantic4(),
            RenderConfig {
                image_size: 96,
                cube_px: 10.0,
                palette_seed: 7,
            },
            42,
        );
        spec.houses.retain(|h| h.name == "shed");
        spec.knockout_plans.clear();
        spec.angles = vec![0, 30];
        generate_dataset(&spec, dir).unwrap()
    }

    #[test]
    fn expand_dataset_writes_deterministic_copies() {
        let ops: Vec<String> = AUGMENTATION_OPS.iter().map(|s| s.to_string()).collect();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = tiny_dataset(d1.path());
        let m2 = tiny_dataset(d2.path());
        let e1 = expand_dataset(&m1, d1.path(), &ops, 3, 9).unwrap();
        let e2 = expand_dataset(&m2, d2.path(), &ops, 3, 9).unwrap();
        assert_eq!(e1.samples.len(), m1.samples.len() * 3);
        assert_eq!(e1, e2);
        // copies follow their base record
        assert_eq!(e1.samples[1].id, format!("{}_aug_1", e1.samples[0].id));
        let aug_id = &e1.samples[1].id;
        assert_eq!(
            std::fs::read(image_path(d1.path(), aug_id)).unwrap(),
            std::fs::read(image_path(d2.path(), aug_id)).unwrap()
        );
        assert_eq!(
            std::fs::read(mask_path(d1.path(), aug_id)).unwrap(),
            std::fs::read(mask_path(d2.path(), aug_id)).unwrap()
        );
        // factor 1 is a no-op
        let same = expand_dataset(&m1, d1.path(), &ops, 1, 9).unwrap();
        assert_eq!(same, m1);
    }

    #[test]
    fn resize_bilinear_matches_hand_computed_axis() {
        let src = Array2::from_shape_vec((1, 2), vec![0.0f32, 1.0]).unwrap();
        let out = resize_bilinear(&src, (1, 4));
        let expect = [0.0f32, 0.25, 0.75, 1.0];
        for (a, b) in out.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-6, "{out:?}");
        }
        // constants are preserved under any resize
        let flat = Array2::from_elem((7, 5), 0.4f32);
        let r = resize_bilinear(&flat, (13, 3));
        assert!(r.iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn resize_nearest_never_invents_values() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let h = rng.random_range(3..40);
            let w = rng.random_range(3..40);
            let mask = Array2::from_shape_fn((h, w), |_| {
                // sparse value set
                *[0u8, 3, 17].get(rng.random_range(0..3)).unwrap()
            });
            let th = rng.random_range(2..50);
            let tw = rng.random_range(2..50);
            let out = resize_nearest(&mask, (th, tw));
            assert_eq!(out.dim(), (th, tw));
            let input_values: std::collections::BTreeSet<u8> = mask.iter().copied().collect();
            assert!(out.iter().all(|v| input_values.contains(v)));
        }
    }

    #[test]
    fn batches_cover_the_split_with_a_partial_tail() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        // shed: 4 stages x 2 angles = 8 samples, all train
        let batches: Vec<BatchTensor> =
            make_batches(&manifest, dir.path(), Split::Train, 3, (64, 64))
                .unwrap()
                .collect();
        let sizes: Vec<usize> = batches.iter().map(BatchTensor::len).collect();
        assert_eq!(sizes, [3, 3, 2]);
        for b in &batches {
            assert_eq!(b.images.dim(), (b.len(), 64, 64, 1));
            assert_eq!(b.masks_onehot.dim(), (b.len(), 64, 64, 4));
            assert!(b.images.iter().all(|&v| (0.0..=1.0).contains(&v)));
            // exact one-hot
            for n in 0..b.len() {
                for y in 0..64 {
                    for x in 0..64 {
                        let sum: f32 = (0..4).map(|c| b.masks_onehot[(n, y, x, c)]).sum();
                        assert_eq!(sum, 1.0);
                    }
                }
            }
        }
        assert!(matches!(
            make_batches(&manifest, dir.path(), Split::Val, 3, (64, 64)),
            Err(DataError::EmptySplit { split: Split::Val })
        ));
        assert!(matches!(
            make_batches(&manifest, dir.path(), Split::Train, 0, (64, 64)),
            Err(DataError::ZeroBatchSize)
        ));
    }

    #[test]
    fn cache_resizes_masks_nearest_and_keeps_values() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = tiny_dataset(dir.path());
        let cache = DatasetCache::load(&manifest, dir.path(), Split::Train, (48, 48)).unwrap();
        assert_eq!(cache.len(), 8);
        for i in 0..cache.len() {
            assert_eq!(cache.mask(i).dim(), (48, 48));
            assert!(cache.mask(i).iter().all(|&v| v < 4));
            assert_eq!(cache.image(i).dim(), (48, 48));
        }
    }
}
