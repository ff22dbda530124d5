//! Cube-house geometry: placements, validation, stage filtering, knockouts
//! and the built-in house library.

use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::label::MAX_CUBES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Foundation,
    Wall,
    Roof,
}

impl Role {
    /// Class index under the semantic-4 labeling.
    pub fn semantic_class(self) -> u8 {
        match self {
            Role::Foundation => 1,
            Role::Wall => 2,
            Role::Roof => 3,
        }
    }
}

/// One cube on the integer grid. `grid_pos` is (i, j, k) with k up; the cube
/// occupies the unit cell [i, i+1] × [j, j+1] × [k, k+1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubePlacement {
    pub grid_pos: (i32, i32, i32),
    pub role: Role,
    pub cube_id: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseSpec {
    pub name: String,
    pub placements: Vec<CubePlacement>,
    pub roof_has_extra_layer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Foundation,
    Walls,
    FoundationAndWalls,
    FullHouse,
}

pub const ALL_STAGES: [Stage; 4] = [
    Stage::Foundation,
    Stage::Walls,
    Stage::FoundationAndWalls,
    Stage::FullHouse,
];

impl Stage {
    pub fn includes(self, role: Role) -> bool {
        match self {
            Stage::Foundation => role == Role::Foundation,
            Stage::Walls => role == Role::Wall,
            Stage::FoundationAndWalls => matches!(role, Role::Foundation | Role::Wall),
            Stage::FullHouse => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Foundation => "foundation",
            Stage::Walls => "walls",
            Stage::FoundationAndWalls => "foundation_and_walls",
            Stage::FullHouse => "full_house",
        }
    }
}

impl HouseSpec {
    /// Checks every structural invariant: placement count, distinct and
    /// contiguous cube ids, unique positions, support, and the extra roof
    /// layer when claimed.
    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.placements.len();
        if n == 0 || n > MAX_CUBES {
            return Err(SceneError::InvalidHouse {
                house: self.name.clone(),
                reason: format!("needs 1..={MAX_CUBES} cubes, has {n}"),
            });
        }
        let mut ids: Vec<u8> = self.placements.iter().map(|p| p.cube_id).collect();
        ids.sort_unstable();
        if ids.iter().enumerate().any(|(i, &id)| id as usize != i + 1) {
            return Err(SceneError::InvalidHouse {
                house: self.name.clone(),
                reason: "cube ids must be distinct and contiguous from 1".into(),
            });
        }
        let mut positions: Vec<(i32, i32, i32)> =
            self.placements.iter().map(|p| p.grid_pos).collect();
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            return Err(SceneError::InvalidHouse {
                house: self.name.clone(),
                reason: "two placements share a grid position".into(),
            });
        }
        for p in &self.placements {
            let (i, j, k) = p.grid_pos;
            if p.role != Role::Foundation
                && k != 0
                && !self
                    .placements
                    .iter()
                    .any(|q| q.grid_pos == (i, j, k - 1))
            {
                return Err(SceneError::InvalidHouse {
                    house: self.name.clone(),
                    reason: format!("cube {} at {:?} is unsupported", p.cube_id, p.grid_pos),
                });
            }
        }
        if self.roof_has_extra_layer {
            let mut roof_levels: Vec<i32> = self
                .placements
                .iter()
                .filter(|p| p.role == Role::Roof)
                .map(|p| p.grid_pos.2)
                .collect();
            roof_levels.sort_unstable();
            roof_levels.dedup();
            if !roof_levels.is_empty() && roof_levels.len() < 2 {
                return Err(SceneError::InvalidHouse {
                    house: self.name.clone(),
                    reason: "extra roof layer claimed but roof occupies one level".into(),
                });
            }
        }
        Ok(())
    }
}

/// Filters a validated house down to one construction stage.
pub fn build_house(spec: &HouseSpec, stage: Stage) -> Result<Vec<CubePlacement>, SceneError> {
    spec.validate()?;
    let selected: Vec<CubePlacement> = spec
        .placements
        .iter()
        .filter(|p| stage.includes(p.role))
        .copied()
        .collect();
    if selected.is_empty() {
        return Err(SceneError::EmptyStage {
            house: spec.name.clone(),
            stage,
        });
    }
    Ok(selected)
}

/// Removes the given cube ids. Fails if an id is unknown or if a remaining
/// cube would be left sitting on a removed one.
pub fn knockout(
    placements: &[CubePlacement],
    removed_ids: &[u8],
) -> Result<Vec<CubePlacement>, SceneError> {
    for &id in removed_ids {
        if !placements.iter().any(|p| p.cube_id == id) {
            return Err(SceneError::UnknownCubeId { id });
        }
    }
    let remaining: Vec<CubePlacement> = placements
        .iter()
        .filter(|p| !removed_ids.contains(&p.cube_id))
        .copied()
        .collect();
    for p in placements.iter().filter(|p| removed_ids.contains(&p.cube_id)) {
        let (i, j, k) = p.grid_pos;
        if let Some(dep) = remaining.iter().find(|q| q.grid_pos == (i, j, k + 1)) {
            return Err(SceneError::SupportViolation {
                removed: p.cube_id,
                dependent: dep.cube_id,
            });
        }
    }
    Ok(remaining)
}

fn place(i: i32, j: i32, k: i32, role: Role, id: &mut u8) -> CubePlacement {
    let cube_id = *id;
    *id += 1;
    CubePlacement {
        grid_pos: (i, j, k),
        role,
        cube_id,
    }
}

/// The five built-in houses, cube counts 1, 13, 20, 34 and 43.
pub fn house_library() -> Vec<HouseSpec> {
    let mut houses = Vec::new();

    // kiosk: a single foundation cube
    houses.push(HouseSpec {
        name: "kiosk".into(),
        placements: vec![CubePlacement {
            grid_pos: (0, 0, 0),
            role: Role::Foundation,
            cube_id: 1,
        }],
        roof_has_extra_layer: false,
    });

    // shed: 2x2 footprint, one wall level, roof plus a ridge cube (13)
    {
        let mut id = 1u8;
        let mut p = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                p.push(place(i, j, 0, Role::Foundation, &mut id));
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                p.push(place(i, j, 1, Role::Wall, &mut id));
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                p.push(place(i, j, 2, Role::Roof, &mut id));
            }
        }
        p.push(place(0, 0, 3, Role::Roof, &mut id));
        houses.push(HouseSpec {
            name: "shed".into(),
            placements: p,
            roof_has_extra_layer: true,
        });
    }

    // cabin: 2x3 footprint, ridge of two cubes (19, 20)
    {
        let mut id = 1u8;
        let mut p = Vec::new();
        for i in 0..2 {
            for j in 0..3 {
                p.push(place(i, j, 0, Role::Foundation, &mut id));
            }
        }
        for i in 0..2 {
            for j in 0..3 {
                p.push(place(i, j, 1, Role::Wall, &mut id));
            }
        }
        for i in 0..2 {
            for j in 0..3 {
                p.push(place(i, j, 2, Role::Roof, &mut id));
            }
        }
        p.push(place(0, 1, 3, Role::Roof, &mut id));
        p.push(place(1, 1, 3, Role::Roof, &mut id));
        houses.push(HouseSpec {
            name: "cabin".into(),
            placements: p,
            roof_has_extra_layer: true,
        });
    }

    // lodge: 3x4 slab foundation, perimeter walls and roof, two ridge cubes
    {
        let mut id = 1u8;
        let mut p = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                p.push(place(i, j, 0, Role::Foundation, &mut id));
            }
        }
        for i in 0..3 {
            for j in 0..4 {
                if i == 0 || i == 2 || j == 0 || j == 3 {
                    p.push(place(i, j, 1, Role::Wall, &mut id));
                }
            }
        }
        for i in 0..3 {
            for j in 0..4 {
                if i == 0 || i == 2 || j == 0 || j == 3 {
                    p.push(place(i, j, 2, Role::Roof, &mut id));
                }
            }
        }
        p.push(place(0, 1, 3, Role::Roof, &mut id));
        p.push(place(0, 2, 3, Role::Roof, &mut id));
        houses.push(HouseSpec {
            name: "lodge".into(),
            placements: p,
            roof_has_extra_layer: true,
        });
    }

    // tower: 3x3 slab, three ring wall levels, ring roof, two ridge cubes
    {
        let mut id = 1u8;
        let mut p = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                p.push(place(i, j, 0, Role::Foundation, &mut id));
            }
        }
        for k in 1..=3 {
            for i in 0..3 {
                for j in 0..3 {
                    if i != 1 || j != 1 {
                        p.push(place(i, j, k, Role::Wall, &mut id));
                    }
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                if i != 1 || j != 1 {
                    p.push(place(i, j, 4, Role::Roof, &mut id));
                }
            }
        }
        p.push(place(0, 0, 5, Role::Roof, &mut id));
        p.push(place(0, 1, 5, Role::Roof, &mut id));
        houses.push(HouseSpec {
            name: "tower".into(),
            placements: p,
            roof_has_extra_layer: true,
        });
    }

    houses
}

/// Default knockout plans per house: progressive removals from the top so
/// every plan is valid on the full house. The empty plan (no knockout) is
/// implicit and not listed here.
pub fn default_knockout_plans(house: &str) -> Vec<Vec<u8>> {
    match house {
        "shed" => vec![vec![13], vec![13, 12], vec![13, 9, 5]],
        "cabin" => vec![vec![19, 20], vec![19, 20, 18], vec![19, 20, 13, 16]],
        "lodge" => vec![vec![33, 34], vec![33, 34, 32], vec![25, 34]],
        "tower" => vec![vec![42, 43], vec![42, 43, 41], vec![42, 43, 34, 37]],
        _ => Vec::new(),
    }
}
