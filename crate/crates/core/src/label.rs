//! Label spaces: the two labeling regimes a dataset can use.

use serde::{Deserialize, Serialize};

/// Maximum number of cubes in a house, and therefore the largest per-cube
/// class index.
pub const MAX_CUBES: usize = 43;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpaceMode {
    /// background / foundation / walls / roof
    Semantic4,
    /// background + one class per cube identity (43 cubes)
    Percube44,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    pub mode: LabelSpaceMode,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl LabelSpace {
    pub fn new(mode: LabelSpaceMode) -> Self {
        match mode {
            LabelSpaceMode::Semantic4 => LabelSpace {
                mode,
                num_classes: 4,
                class_names: ["background", "foundation", "walls", "roof"]
                    .map(String::from)
                    .to_vec(),
            },
            LabelSpaceMode::Percube44 => {
                let mut class_names = vec!["background".to_string()];
                class_names.extend((1..=MAX_CUBES).map(|i| format!("cube_{i:02}")));
                LabelSpace {
                    mode,
                    num_classes: MAX_CUBES + 1,
                    class_names,
                }
            }
        }
    }

    pub fn semantic4() -> Self {
        Self::new(LabelSpaceMode::Semantic4)
    }

    pub fn percube44() -> Self {
        Self::new(LabelSpaceMode::Percube44)
    }
}
