//! Blueprints: the ordered pick-and-place instructions of an episode, in a
//! form a downstream motion executor can follow without the simulator.
//!
//! ```json
//! {
//!   "format": "bridge-blueprint",
//!   "version": 1,
//!   "valley_width": 0.096,
//!   "block_length": 0.12,
//!   "block_thickness": 0.05,
//!   "cliff_height": 0.24,
//!   "n_blocks": 7,
//!   "seed": 0,
//!   "config": { ... },
//!   "records": [
//!     { "step": 0, "object_id": 3, "target": { "y": 0.0, "z": 0.27, "angle": 0.0 } },
//!     { "step": 1, "object_id": 3, "target": "reset" }
//!   ]
//! }
//! ```
//!
//! Positions are metres in the valley frame (origin at the valley centre on
//! the floor, `z` up); angles are radians about the `x` axis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{BridgeEnv, EnvConfig, EnvError, Instruction, Target};
use crate::replay::{Header, Replay};

pub const BLUEPRINT_FORMAT: &str = "bridge-blueprint";
pub const BLUEPRINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BlueprintError {
    #[error("malformed blueprint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a blueprint file (format tag {0:?})")]
    BadFormat(String),
    #[error("unsupported blueprint version {0}")]
    UnsupportedVersion(u32),
    #[error("record {index} has step {step}; steps must be 0, 1, 2, ...")]
    OutOfOrder { index: usize, step: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlueprintRecord {
    pub step: usize,
    pub object_id: usize,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub format: String,
    pub version: u32,
    pub valley_width: f64,
    pub block_length: f64,
    pub block_thickness: f64,
    pub cliff_height: f64,
    pub n_blocks: usize,
    pub seed: u64,
    pub config: EnvConfig,
    pub records: Vec<BlueprintRecord>,
}

impl Blueprint {
    pub fn from_replay(replay: &Replay) -> Self {
        let scene = &replay.config.scene;
        Self {
            format: BLUEPRINT_FORMAT.into(),
            version: BLUEPRINT_VERSION,
            valley_width: replay.valley_width,
            block_length: scene.block_length(),
            block_thickness: scene.block_thickness(),
            cliff_height: scene.cliff_height,
            n_blocks: scene.n_blocks,
            seed: replay.seed,
            config: replay.config,
            records: replay
                .steps
                .iter()
                .enumerate()
                .map(|(step, s)| BlueprintRecord {
                    step,
                    object_id: s.instruction.object_id,
                    target: s.instruction.target,
                })
                .collect(),
        }
    }

    pub fn instructions(&self) -> Vec<Instruction> {
        self.records.iter().map(|r| Instruction { object_id: r.object_id, target: r.target }).collect()
    }

    pub fn n_placements(&self) -> usize {
        self.records.iter().filter(|r| r.target != Target::Reset).count()
    }

    /// Executes the blueprint in the simulator and returns the final environment.
    pub fn resimulate(&self) -> Result<BridgeEnv, BlueprintError> {
        let mut env = BridgeEnv::new(self.config)?;
        env.reset(self.seed, self.valley_width)?;
        for ins in self.instructions() {
            env.step_instruction(ins)?;
        }
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("blueprint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, BlueprintError> {
        let header: Header = serde_json::from_str(text)?;
        if header.format != BLUEPRINT_FORMAT {
            return Err(BlueprintError::BadFormat(header.format));
        }
        if header.version != BLUEPRINT_VERSION {
            return Err(BlueprintError::UnsupportedVersion(header.version));
        }
        let bp: Self = serde_json::from_str(text)?;
        for (index, r) in bp.records.iter().enumerate() {
            if r.step != index {
                return Err(BlueprintError::OutOfOrder { index, step: r.step });
            }
        }
        Ok(bp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Blueprint {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        let ins = [
            Instruction { object_id: 2, target: Target::Place { y: 0.013, z: 0.281, angle: 0.0 } },
            Instruction { object_id: 4, target: Target::Place { y: 0.3, z: 0.3, angle: std::f64::consts::FRAC_PI_2 } },
            Instruction { object_id: 4, target: Target::Reset },
        ];
        Blueprint::from_replay(&Replay::record_episode(&mut env, 1, 0.1, &ins).unwrap())
    }

    #[test]
    fn reset_is_a_literal_string() {
        let json = sample().to_json();
        assert!(json.contains("\"target\": \"reset\""));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["records"][0]["target"]["y"], 0.013);
    }

    #[test]
    fn round_trip_is_exact() {
        let bp = sample();
        assert_eq!(Blueprint::from_json(&bp.to_json()).unwrap(), bp);
        assert_eq!(bp.n_placements(), 2);
    }

    #[test]
    fn rejects_unknown_target_word_and_gaps() {
        let json = sample().to_json().replace("\"reset\"", "\"explode\"");
        assert!(matches!(Blueprint::from_json(&json), Err(BlueprintError::Json(_))));
        let mut bp = sample();
        bp.records[1].step = 5;
        assert!(matches!(Blueprint::from_json(&bp.to_json()), Err(BlueprintError::OutOfOrder { index: 1, step: 5 })));
    }
}
