//! Synthetic cube-house scenes: geometry, rendering and dataset generation.

pub mod dataset;
pub mod house;
pub mod render;

pub use dataset::{
    generate_dataset, image_path, load_mask, load_rgb, mask_path, save_mask, save_rgb,
    DatasetManifest, GenerateSpec, SampleRecord, Split, MANIFEST_VERSION,
};
pub use house::{
    build_house, default_knockout_plans, house_library, knockout, CubePlacement, HouseSpec, Role,
    Stage, ALL_STAGES,
};
pub use render::{
    camera_basis, render_view, RenderConfig, RenderedView, ELEVATION_DEG, VALID_ANGLES,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid house '{house}': {reason}")]
    InvalidHouse { house: String, reason: String },

    #[error("duplicate house name '{house}'")]
    DuplicateHouse { house: String },

    #[error("house '{house}' has no cubes in stage {}", stage.as_str())]
    EmptyStage { house: String, stage: Stage },

    #[error("cube id {id} not present in the scene")]
    UnknownCubeId { id: u8 },

    #[error("removing cube {removed} would leave cube {dependent} unsupported")]
    SupportViolation { removed: u8, dependent: u8 },

    #[error("angle {angle_deg} is not one of the supported views (0, 30, 60, 90)")]
    InvalidAngle { angle_deg: u32 },

    #[error("cannot render an empty scene")]
    EmptyScene,

    #[error("bad render config: {reason}")]
    BadRenderConfig { reason: String },

    #[error(
        "image size {image_size} too small for the projected scene \
         ({width_needed}x{height_needed} px needed)"
    )]
    ImageTooSmall {
        image_size: usize,
        width_needed: usize,
        height_needed: usize,
    },

    #[error("knockout plan {plan:?} is invalid for house '{house}': {reason}")]
    InvalidKnockoutPlan {
        house: String,
        plan: Vec<u8>,
        reason: String,
    },

    #[error("generation produced no samples; check houses, stages and angles")]
    EmptyDataset,

    #[error("manifest error: {reason}")]
    Manifest { reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {reason}")]
    Image { path: PathBuf, reason: String },
}
