//! The block-bridge MDP: observations, discretised actions, teleport-then-settle
//! transitions and ray-cast rewards.

mod action;
mod observation;
mod reward;

pub use action::{decode_action, ActionConfig, Instruction, PlacementRegion, RawAction, Target};
pub use observation::{encode_observation, Observation, KINEMATIC_DIM, OBS_DIM, TIME_COLUMN, TYPE_COLUMN};
pub use reward::{
    blocks_in_valley, compute_heights, compute_reward, is_success, probe_positions, RewardBreakdown,
    RewardConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{PhysicsError, Placement, SceneConfig, SceneState, FIRST_BLOCK};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("invalid instruction: {0}")]
    InvalidInstruction(String),
    #[error("{component} bin {value} out of range (head has {size} bins)")]
    BinOutOfRange { component: &'static str, value: usize, size: usize },
    #[error("episode is over; call reset")]
    EpisodeDone,
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub scene: SceneConfig,
    pub horizon: usize,
    pub n_probes: usize,
    pub rewards: RewardConfig,
    pub actions: ActionConfig,
    /// Added to `cliff_height + block_thickness` to form the success threshold.
    /// Slightly negative by default: a flat block resting on both cliff tops
    /// sits at exactly that height minus contact penetration, and the
    /// success test is strict.
    pub threshold_offset: f64,
    pub reset_token: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            horizon: 30,
            n_probes: 21,
            rewards: RewardConfig::default(),
            actions: ActionConfig::default(),
            threshold_offset: -2.5e-3,
            reset_token: -1.0,
        }
    }
}

impl EnvConfig {
    pub fn n_blocks(&self) -> usize {
        self.scene.n_blocks
    }

    pub fn n_rows(&self) -> usize {
        self.scene.n_blocks + 2
    }

    pub fn success_threshold(&self) -> f64 {
        self.scene.cliff_height + self.scene.block_thickness() + self.threshold_offset
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.scene.validate()?;
        if self.horizon == 0 {
            return Err(EnvError::InvalidConfig("horizon must be positive".into()));
        }
        if self.n_probes < 2 {
            return Err(EnvError::InvalidConfig("at least two probes are required".into()));
        }
        if self.scene.n_blocks == 0 {
            return Err(EnvError::InvalidConfig("need at least one block".into()));
        }
        let a = &self.actions;
        if a.y_bins == 0 || a.z_bins == 0 || a.rotation_bins == 0 {
            return Err(EnvError::InvalidConfig("every action head needs at least one bin".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub settle_steps: usize,
    /// `false` when settling hit its step limit (the scene was still jittering).
    pub converged: bool,
    pub success: bool,
    pub blocks_in_valley: usize,
    pub heights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Step {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub info: StepInfo,
}

/// One episode-at-a-time environment instance.
#[derive(Clone, Debug)]
pub struct BridgeEnv {
    config: EnvConfig,
    scene: SceneState,
    t: usize,
    seed: u64,
}

impl BridgeEnv {
    /// Creates an environment with a scene at the narrowest configured width;
    /// call [`BridgeEnv::reset`] to start an episode.
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let scene = SceneState::new(config.scene, config.scene.min_width)?;
        Ok(Self { config, scene, t: 0, seed: 0 })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn scene(&self) -> &SceneState {
        &self.scene
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Tag of the current episode, recorded in replays and blueprints.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.horizon
    }

    /// Starts a new episode with all blocks staged.
    pub fn reset(&mut self, seed: u64, valley_width: f64) -> Result<Observation, EnvError> {
        self.scene = SceneState::new(self.config.scene, valley_width)?;
        self.t = 0;
        self.seed = seed;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        encode_observation(&self.scene, self.t, self.config.horizon, self.config.reset_token)
    }

    pub fn placement_region(&self) -> PlacementRegion {
        PlacementRegion::for_valley(
            self.scene.valley_width,
            self.config.scene.block_length(),
            self.config.scene.cliff_height,
        )
    }

    pub fn decode_action(&self, raw: RawAction) -> Result<Instruction, EnvError> {
        decode_action(raw, &self.config.actions, &self.placement_region(), self.config.n_blocks())
    }

    pub fn step(&mut self, raw: RawAction) -> Result<Step, EnvError> {
        let instruction = self.decode_action(raw)?;
        self.step_instruction(instruction)
    }

    /// Teleports, settles, scores the settled scene and advances time.
    pub fn step_instruction(&mut self, instruction: Instruction) -> Result<Step, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeDone);
        }
        if instruction.object_id >= self.config.n_blocks() {
            return Err(EnvError::InvalidInstruction(format!("object {} is not a block", instruction.object_id)));
        }
        let placement = match instruction.target {
            Target::Place { y, z, angle } => Placement::Pose { y, z, angle },
            Target::Reset => Placement::Staged,
        };
        self.scene.teleport(FIRST_BLOCK + instruction.object_id, placement)?;
        let report = self.scene.settle();
        let heights = compute_heights(&self.scene, self.config.n_probes);
        let used = blocks_in_valley(&self.scene);
        let threshold = self.config.success_threshold();
        let reward = compute_reward(&heights, threshold, used, self.config.n_blocks(), &self.config.rewards);
        self.t += 1;
        Ok(Step {
            observation: self.observe(),
            reward,
            done: self.is_done(),
            info: StepInfo {
                settle_steps: report.steps,
                converged: report.converged,
                success: is_success(&heights, threshold),
                blocks_in_valley: used,
                heights,
            },
        })
    }

    pub fn is_success(&self) -> bool {
        is_success(&compute_heights(&self.scene, self.config.n_probes), self.config.success_threshold())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: f64 = 0.12;

    fn place(env: &BridgeEnv, object_id: usize, y: f64, z: f64, angle: f64) -> Instruction {
        let _ = env;
        Instruction { object_id, target: Target::Place { y, z, angle } }
    }

    #[test]
    fn reset_masks_every_block() {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        let obs = env.reset(3, 0.2).unwrap();
        assert_eq!(obs.shape(), (9, 14));
        for i in 0..7 {
            assert!(obs.row(i)[..KINEMATIC_DIM].iter().all(|&v| v == -1.0));
        }
        let again = env.reset(3, 0.2).unwrap();
        assert_eq!(obs, again);
    }

    #[test]
    fn single_span_bridge_succeeds() {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        env.reset(0, 0.5 * L).unwrap();
        let step = env.step_instruction(place(&env, 0, 0.0, 0.2775, 0.0)).unwrap();
        assert!(step.info.converged);
        assert!(step.info.success);
        assert_eq!(step.reward.r_succ, 1.0);
        assert_eq!(step.reward.r_cons, 1.0);
    }

    #[test]
    fn reset_instruction_remasks_row() {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        env.reset(0, 0.3).unwrap();
        let s = env.step_instruction(place(&env, 2, 0.0, 0.1, 0.0)).unwrap();
        assert!(s.observation.row(2)[..KINEMATIC_DIM].iter().any(|&v| v != -1.0));
        let s = env.step_instruction(Instruction { object_id: 2, target: Target::Reset }).unwrap();
        assert!(s.observation.row(2)[..KINEMATIC_DIM].iter().all(|&v| v == -1.0));
        assert!(env.scene().block(2).state.staged);
    }

    #[test]
    fn episode_ends_after_horizon() {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        env.reset(0, 0.3).unwrap();
        let reset = RawAction { object: 0, y_bin: 64, z_bin: 0, rot_bin: 0 };
        for t in 1..=30 {
            let s = env.step(reset).unwrap();
            assert_eq!(s.done, t == 30);
        }
        assert_eq!(env.step(reset).unwrap_err(), EnvError::EpisodeDone);
    }

    #[test]
    fn invalid_width_is_configuration_error() {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        assert!(matches!(env.reset(0, 0.5), Err(EnvError::Physics(PhysicsError::WidthOutOfRange { .. }))));
    }

    #[test]
    fn config_validation() {
        let mut c = EnvConfig::default();
        c.n_probes = 1;
        assert!(BridgeEnv::new(c).is_err());
        let mut c = EnvConfig::default();
        c.horizon = 0;
        assert!(BridgeEnv::new(c).is_err());
    }
}
