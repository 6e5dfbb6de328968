use serde::{Deserialize, Serialize};

use super::EnvError;

/// Discretisation of the placement heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionConfig {
    /// Placement bins along `y`; the `y` head has one extra bin meaning "reset".
    pub y_bins: usize,
    pub z_bins: usize,
    pub rotation_bins: usize,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self { y_bins: 64, z_bins: 32, rotation_bins: 2 }
    }
}

impl ActionConfig {
    pub fn y_head_size(&self) -> usize {
        self.y_bins + 1
    }

    pub fn reset_bin(&self) -> usize {
        self.y_bins
    }

    /// Rotation bins spread evenly over `[0, π/2]`.
    pub fn rotation_angle(&self, bin: usize) -> f64 {
        if self.rotation_bins <= 1 {
            0.0
        } else {
            bin as f64 * std::f64::consts::FRAC_PI_2 / (self.rotation_bins - 1) as f64
        }
    }
}

/// Bin indices as produced by the policy heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RawAction {
    pub object: usize,
    pub y_bin: usize,
    pub z_bin: usize,
    pub rot_bin: usize,
}

/// Serialized as `{"y": .., "z": .., "angle": ..}` or the literal string `"reset"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "TargetRepr", try_from = "TargetRepr")]
pub enum Target {
    Place { y: f64, z: f64, angle: f64 },
    Reset,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetRepr {
    Pose { y: f64, z: f64, angle: f64 },
    Word(String),
}

impl From<Target> for TargetRepr {
    fn from(t: Target) -> Self {
        match t {
            Target::Place { y, z, angle } => TargetRepr::Pose { y, z, angle },
            Target::Reset => TargetRepr::Word("reset".into()),
        }
    }
}

impl TryFrom<TargetRepr> for Target {
    type Error = String;

    fn try_from(r: TargetRepr) -> Result<Self, String> {
        match r {
            TargetRepr::Pose { y, z, angle } => Ok(Target::Place { y, z, angle }),
            TargetRepr::Word(w) if w == "reset" => Ok(Target::Reset),
            TargetRepr::Word(w) => Err(format!("unknown target {w:?}, expected \"reset\" or a pose")),
        }
    }
}

/// A decoded pick-and-place command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub object_id: usize,
    pub target: Target,
}

/// Axis-aligned box that placement bins are spread over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlacementRegion {
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl PlacementRegion {
    /// `y` spans the gap plus one block length over each cliff; `z` runs
    /// from the floor to two block lengths above the cliff tops.
    pub fn for_valley(valley_width: f64, block_length: f64, cliff_height: f64) -> Self {
        let half = 0.5 * valley_width + block_length;
        Self { y_min: -half, y_max: half, z_min: 0.0, z_max: cliff_height + 2.0 * block_length }
    }
}

fn bin_center(lo: f64, hi: f64, bins: usize, i: usize) -> f64 {
    lo + (i as f64 + 0.5) * (hi - lo) / bins as f64
}

pub fn decode_action(
    raw: RawAction,
    bins: &ActionConfig,
    region: &PlacementRegion,
    n_blocks: usize,
) -> Result<Instruction, EnvError> {
    let checks = [
        ("object", raw.object, n_blocks + 2),
        ("y", raw.y_bin, bins.y_head_size()),
        ("z", raw.z_bin, bins.z_bins),
        ("rotation", raw.rot_bin, bins.rotation_bins),
    ];
    for (component, value, size) in checks {
        if value >= size {
            return Err(EnvError::BinOutOfRange { component, value, size });
        }
    }
    if raw.object >= n_blocks {
        return Err(EnvError::InvalidInstruction(format!("object {} is a cliff", raw.object)));
    }
    let target = if raw.y_bin == bins.reset_bin() {
        Target::Reset
    } else {
        Target::Place {
            y: bin_center(region.y_min, region.y_max, bins.y_bins, raw.y_bin),
            z: bin_center(region.z_min, region.z_max, bins.z_bins, raw.z_bin),
            angle: bins.rotation_angle(raw.rot_bin),
        }
    };
    Ok(Instruction { object_id: raw.object, target })
}
