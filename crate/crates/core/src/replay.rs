//! Episode replays: the instruction sequence plus a scene snapshot after
//! every settled step, stored as versioned JSON.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{BridgeEnv, EnvConfig, EnvError, Instruction, RewardBreakdown, Step};
use crate::physics::{SceneState, Snapshot, SnapshotError};

pub const REPLAY_FORMAT: &str = "bridge-replay";
pub const REPLAY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("malformed replay json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a replay file (format tag {0:?})")]
    BadFormat(String),
    #[error("unsupported replay version {0}")]
    UnsupportedVersion(u32),
    #[error("bad snapshot encoding: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("snapshot index {index} out of range ({len} frames)")]
    FrameOutOfRange { index: usize, len: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    pub instruction: Instruction,
    pub reward: RewardBreakdown,
    pub success: bool,
    pub settle_steps: usize,
    pub converged: bool,
    pub heights: Vec<f64>,
    /// Base64 of the binary scene snapshot taken after settling.
    pub snapshot: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    pub format: String,
    pub version: u32,
    pub config: EnvConfig,
    pub seed: u64,
    pub valley_width: f64,
    pub initial: String,
    pub steps: Vec<ReplayStep>,
}

fn encode_scene(scene: &SceneState) -> String {
    B64.encode(Snapshot::of(scene).encode())
}

impl Replay {
    /// Starts a recording from an environment that was just reset.
    pub fn start(env: &BridgeEnv) -> Self {
        Self {
            format: REPLAY_FORMAT.into(),
            version: REPLAY_VERSION,
            config: *env.config(),
            seed: env.seed(),
            valley_width: env.scene().valley_width,
            initial: encode_scene(env.scene()),
            steps: Vec::new(),
        }
    }

    /// Appends the outcome of `env.step_instruction(instruction)`.
    pub fn record(&mut self, env: &BridgeEnv, instruction: Instruction, step: &Step) {
        self.steps.push(ReplayStep {
            instruction,
            reward: step.reward,
            success: step.info.success,
            settle_steps: step.info.settle_steps,
            converged: step.info.converged,
            heights: step.info.heights.clone(),
            snapshot: encode_scene(env.scene()),
        });
    }

    /// Resets `env` and plays `instructions`, recording every step.
    pub fn record_episode(
        env: &mut BridgeEnv,
        seed: u64,
        valley_width: f64,
        instructions: &[Instruction],
    ) -> Result<Self, EnvError> {
        env.reset(seed, valley_width)?;
        let mut replay = Self::start(env);
        for &ins in instructions {
            let step = env.step_instruction(ins)?;
            replay.record(env, ins, &step);
        }
        Ok(replay)
    }

    pub fn instructions(&self) -> Vec<Instruction> {
        self.steps.iter().map(|s| s.instruction).collect()
    }

    /// Number of renderable scenes: the initial one plus one per step.
    pub fn n_frames(&self) -> usize {
        self.steps.len() + 1
    }

    /// Scene at frame `index` (0 is the freshly reset scene).
    pub fn scene(&self, index: usize) -> Result<SceneState, ReplayError> {
        let encoded = match index {
            0 => &self.initial,
            i if i <= self.steps.len() => &self.steps[i - 1].snapshot,
            _ => return Err(ReplayError::FrameOutOfRange { index, len: self.n_frames() }),
        };
        let bytes = B64.decode(encoded)?;
        Ok(Snapshot::decode(&bytes)?.into_scene(self.config.scene)?)
    }

    pub fn final_scene(&self) -> Result<SceneState, ReplayError> {
        self.scene(self.steps.len())
    }

    pub fn final_success(&self) -> bool {
        self.steps.last().is_some_and(|s| s.success)
    }

    /// Plays the recorded instructions again in a fresh environment.
    pub fn resimulate(&self) -> Result<BridgeEnv, ReplayError> {
        let mut env = BridgeEnv::new(self.config)?;
        env.reset(self.seed, self.valley_width)?;
        for s in &self.steps {
            env.step_instruction(s.instruction)?;
        }
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("replay serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ReplayError> {
        let header: Header = serde_json::from_str(text)?;
        if header.format != REPLAY_FORMAT {
            return Err(ReplayError::BadFormat(header.format));
        }
        if header.version != REPLAY_VERSION {
            return Err(ReplayError::UnsupportedVersion(header.version));
        }
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Deserialize)]
pub(crate) struct Header {
    pub format: String,
    pub version: u32,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Target;

    fn episode() -> Replay {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        let ins = [
            Instruction { object_id: 0, target: Target::Place { y: 0.0, z: 0.28, angle: 0.0 } },
            Instruction { object_id: 1, target: Target::Place { y: 0.05, z: 0.4, angle: 0.3 } },
            Instruction { object_id: 1, target: Target::Reset },
        ];
        Replay::record_episode(&mut env, 9, 0.09, &ins).unwrap()
    }

    #[test]
    fn json_round_trip() {
        let r = episode();
        let back = Replay::from_json(&r.to_json()).unwrap();
        assert_eq!(r, back);
        assert_eq!(back.n_frames(), 4);
        assert!(back.final_success());
    }

    #[test]
    fn resimulation_is_bit_identical() {
        let r = episode();
        let env = r.resimulate().unwrap();
        assert_eq!(Snapshot::of(env.scene()), Snapshot::of(&r.final_scene().unwrap()));
    }

    #[test]
    fn rejects_wrong_header() {
        let r = episode();
        let mut v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        v["format"] = "bridge-blueprint".into();
        assert!(matches!(Replay::from_json(&v.to_string()), Err(ReplayError::BadFormat(_))));
        v["format"] = REPLAY_FORMAT.into();
        v["version"] = 7.into();
        assert!(matches!(Replay::from_json(&v.to_string()), Err(ReplayError::UnsupportedVersion(7))));
        assert!(matches!(r.scene(10), Err(ReplayError::FrameOutOfRange { .. })));
    }
}
