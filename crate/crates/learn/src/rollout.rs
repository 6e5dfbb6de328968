//! Lock-step rollout collection over worker-owned environments.

use bridge_autodiff::Graph;
use bridge_core::curriculum::Curriculum;
use bridge_core::env::{BridgeEnv, EnvConfig, Observation, RawAction, Step};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_action, ActionDistributions};
use crate::gae::gae;
use crate::network::{ObsBatch, PolicyNet, Want};
use crate::LearnError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub worker: usize,
    pub width: f64,
    pub hard: bool,
    pub success: bool,
    pub reward: f64,
    pub blocks_in_valley: usize,
}

/// Transitions of one collection, time-major: index `t * n_workers + w`.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub n_workers: usize,
    pub n_steps: usize,
    pub obs: ObsBatch,
    pub actions: Vec<RawAction>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    /// Unnormalised; normalisation happens per update.
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episodes: Vec<EpisodeStats>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Fills advantages and returns from rewards, dones and values.
    pub fn compute_gae(&mut self, next_values: &[f64], gamma: f64, lambda: f64) {
        let (nw, ns) = (self.n_workers, self.n_steps);
        self.advantages = vec![0.0; nw * ns];
        self.returns = vec![0.0; nw * ns];
        for w in 0..nw {
            let idx: Vec<usize> = (0..ns).map(|t| t * nw + w).collect();
            let r: Vec<f64> = idx.iter().map(|&i| self.rewards[i]).collect();
            let v: Vec<f64> = idx.iter().map(|&i| self.values[i]).collect();
            let d: Vec<bool> = idx.iter().map(|&i| self.dones[i]).collect();
            let adv = gae(&r, &v, &d, next_values[w], gamma, lambda);
            for (k, &i) in idx.iter().enumerate() {
                self.advantages[i] = adv[k];
                self.returns[i] = adv[k] + v[k];
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Worker {
    env: BridgeEnv,
    rng: ChaCha8Rng,
    obs: Observation,
    width: f64,
    reward: f64,
}

/// Environments, their RNG streams and the shared curriculum.
#[derive(Clone, Debug)]
pub struct WorkerPool {
    workers: Vec<Worker>,
    pub curriculum: Curriculum,
}

impl WorkerPool {
    pub fn new(env: &EnvConfig, curriculum: Curriculum, n_workers: usize, seed: u64) -> Result<Self, LearnError> {
        if n_workers == 0 {
            return Err(LearnError::InvalidConfig("n_workers must be positive".into()));
        }
        let workers = (0..n_workers)
            .map(|w| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(w as u64 + 1);
                let mut env = BridgeEnv::new(*env)?;
                let width = curriculum.sample_width(&mut rng);
                let obs = env.reset(rng.gen(), width)?;
                Ok(Worker { env, rng, obs, width, reward: 0.0 })
            })
            .collect::<Result<_, LearnError>>()?;
        Ok(Self { workers, curriculum })
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn observations(&self) -> Result<ObsBatch, LearnError> {
        ObsBatch::from_observations(self.workers.iter().map(|w| &w.obs))
    }

    /// Current in-flight widths, one per worker.
    pub fn widths(&self) -> Vec<f64> {
        self.workers.iter().map(|w| w.width).collect()
    }

    /// Restarts every worker's episode with a fresh curriculum width.
    pub fn restart(&mut self) -> Result<(), LearnError> {
        for w in &mut self.workers {
            w.width = self.curriculum.sample_width(&mut w.rng);
            w.obs = w.env.reset(w.rng.gen(), w.width)?;
            w.reward = 0.0;
        }
        Ok(())
    }

    /// RNG states for checkpointing.
    pub fn rngs(&self) -> Vec<ChaCha8Rng> {
        self.workers.iter().map(|w| w.rng.clone()).collect()
    }

    pub fn set_rngs(&mut self, rngs: Vec<ChaCha8Rng>) -> Result<(), LearnError> {
        if rngs.len() != self.workers.len() {
            return Err(LearnError::Checkpoint(format!("{} worker RNGs for {} workers", rngs.len(), self.workers.len())));
        }
        self.workers.iter_mut().zip(rngs).for_each(|(w, r)| w.rng = r);
        Ok(())
    }

    fn step_all(&mut self, actions: &[RawAction]) -> Result<Vec<Step>, LearnError> {
        self.workers
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(w, &a)| w.env.step(a).map_err(LearnError::from))
            .collect()
    }

    /// Steps every worker `n_steps` times under a frozen `net`, then fills
    /// GAE advantages. Episodes carry over between collections.
    pub fn collect(
        &mut self,
        net: &PolicyNet<f32>,
        n_steps: usize,
        gamma: f64,
        lambda: f64,
    ) -> Result<RolloutBatch, LearnError> {
        let nw = self.workers.len();
        let rows = net.config().n_rows();
        let mut batch = RolloutBatch {
            n_workers: nw,
            n_steps,
            obs: ObsBatch { batch: 0, rows, data: Vec::new(), mask: Vec::new() },
            actions: Vec::with_capacity(nw * n_steps),
            log_probs: Vec::with_capacity(nw * n_steps),
            rewards: Vec::with_capacity(nw * n_steps),
            dones: Vec::with_capacity(nw * n_steps),
            values: Vec::with_capacity(nw * n_steps),
            advantages: Vec::new(),
            returns: Vec::new(),
            episodes: Vec::new(),
        };
        let want = Want { value: true, aux: false };
        for _ in 0..n_steps {
            let obs = self.observations()?;
            let mut g = Graph::new();
            let heads = net.forward(&mut g, &obs, want)?;
            let values = g.value(heads.value.expect("value requested")).data();
            let mut actions = Vec::with_capacity(nw);
            for (i, w) in self.workers.iter_mut().enumerate() {
                let d = ActionDistributions::from_heads(&g, &heads, i);
                let (a, lp) = sample_action(&d, &mut w.rng, false);
                actions.push(a);
                batch.log_probs.push(lp);
                batch.values.push(values[i] as f64);
            }
            let steps = self.step_all(&actions)?;
            batch.obs.data.extend_from_slice(&obs.data);
            batch.obs.mask.extend_from_slice(&obs.mask);
            batch.obs.batch += nw;
            batch.actions.extend_from_slice(&actions);
            for (i, s) in steps.iter().enumerate() {
                let w = &mut self.workers[i];
                batch.rewards.push(s.reward.total);
                batch.dones.push(s.done);
                w.reward += s.reward.total;
                w.obs = s.observation.clone();
                if s.done {
                    batch.episodes.push(EpisodeStats {
                        worker: i,
                        width: w.width,
                        hard: self.curriculum.config().is_hard(w.width),
                        success: s.info.success,
                        reward: w.reward,
                        blocks_in_valley: s.info.blocks_in_valley,
                    });
                    self.curriculum.update(s.info.success);
                }
            }
            for (w, s) in self.workers.iter_mut().zip(&steps) {
                if s.done {
                    w.width = self.curriculum.sample_width(&mut w.rng);
                    w.obs = w.env.reset(w.rng.gen(), w.width)?;
                    w.reward = 0.0;
                }
            }
        }
        let obs = self.observations()?;
        let mut g = Graph::new();
        let heads = net.forward(&mut g, &obs, want)?;
        let next: Vec<f64> = g.value(heads.value.expect("value requested")).data().iter().map(|&v| v as f64).collect();
        batch.compute_gae(&next, gamma, lambda);
        Ok(batch)
    }
}
