//! PPO and phasic policy gradient training.
//!
//! One iteration collects a rollout batch with a frozen copy of the
//! network, runs the policy phase over it, and (for PPG) stores it in a
//! buffer. After every `n_pi` iterations a PPG value phase regresses values
//! over the whole buffer while a KL term keeps the policy where it was.

use std::path::PathBuf;
use std::time::Instant;

use bridge_autodiff::{Adam, Graph};
use bridge_core::curriculum::{Curriculum, CurriculumConfig};
use bridge_core::env::{EnvConfig, RawAction};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{evaluate_actions, ActionDistributions};
use crate::gae::normalize;
use crate::losses::{joint_loss, ppo_policy_loss, value_loss};
use crate::network::{ArchVariant, NetworkConfig, ObsBatch, PolicyNet, Want};
use crate::rollout::{RolloutBatch, WorkerPool};
use crate::LearnError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ppo,
    Ppg,
}

/// How to read `n_steps`: per worker, or split across all workers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepsMode {
    PerWorker,
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub network: NetworkConfig,
    pub curriculum: CurriculumConfig,
    pub algorithm: Algorithm,
    pub n_workers: usize,
    pub n_steps: usize,
    pub steps_mode: StepsMode,
    pub n_minibatches: usize,
    pub n_epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub beta_clone: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    /// Policy iterations per value phase.
    pub n_pi: usize,
    /// Epochs over the buffer in each value phase.
    pub e_v: usize,
    /// Minibatches per value-phase epoch (over the whole buffer).
    pub value_minibatches: usize,
    pub total_steps: u64,
    pub seed: u64,
    /// Environment steps between deterministic evaluations; 0 disables them.
    pub eval_every: u64,
    pub eval_tasks: usize,
    pub eval_seed: u64,
    /// Environment steps between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            network: NetworkConfig::default(),
            curriculum: CurriculumConfig::default(),
            algorithm: Algorithm::Ppg,
            n_workers: 32,
            n_steps: 1024,
            steps_mode: StepsMode::PerWorker,
            n_minibatches: 32,
            n_epochs: 10,
            gamma: 0.97,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            entropy_coef: 0.01,
            lr: 2.5e-4,
            beta_clone: 3.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            n_pi: 8,
            e_v: 6,
            value_minibatches: 256,
            total_steps: 20_000_000,
            seed: 0,
            eval_every: 0,
            eval_tasks: 100,
            eval_seed: 12345,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::InvalidConfig(m));
        self.env.validate()?;
        self.network.validate()?;
        self.curriculum.validate()?;
        if self.network.n_blocks != self.env.n_blocks() || self.network.actions != self.env.actions {
            return bad("network and environment disagree on blocks or action bins".into());
        }
        let positive = [
            ("n_workers", self.n_workers),
            ("n_steps", self.n_steps),
            ("n_minibatches", self.n_minibatches),
            ("n_epochs", self.n_epochs),
            ("n_pi", self.n_pi),
            ("e_v", self.e_v),
            ("value_minibatches", self.value_minibatches),
            ("eval_tasks", self.eval_tasks),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.steps_per_worker() == 0 {
            return bad("n_steps is smaller than n_workers".into());
        }
        if self.batch_size() < self.n_minibatches {
            return bad("more minibatches than transitions".into());
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps {} outside (0, 1)", self.clip_eps));
        }
        let unit = [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} outside (0, 1]"));
            }
        }
        let nonneg = [
            ("entropy_coef", self.entropy_coef),
            ("beta_clone", self.beta_clone),
            ("vf_coef", self.vf_coef),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative"));
            }
        }
        if !(self.lr > 0.0 && self.max_grad_norm > 0.0) {
            return bad("lr and max_grad_norm must be positive".into());
        }
        Ok(())
    }

    pub fn steps_per_worker(&self) -> usize {
        match self.steps_mode {
            StepsMode::PerWorker => self.n_steps,
            StepsMode::Total => self.n_steps / self.n_workers.max(1),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.steps_per_worker() * self.n_workers
    }

    /// Short label such as `ppg-shared`.
    pub fn variant_name(&self) -> String {
        let a = match self.algorithm {
            Algorithm::Ppo => "ppo",
            Algorithm::Ppg => "ppg",
        };
        let v = match self.network.variant {
            ArchVariant::Shared => "shared",
            ArchVariant::Dual => "dual",
        };
        format!("{a}-{v}")
    }
}

/// Statistics of one policy or value phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub loss_pi: f64,
    pub loss_v: f64,
    pub entropy: f64,
    /// Policy phase: mean `log π_old − log π` of taken actions after the
    /// phase. Value phase: mean factorised KL to the pre-phase policy.
    pub kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub updates: u64,
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub step: u64,
    pub iteration: u64,
    pub variant: String,
    pub episodes: usize,
    pub mean_reward: Option<f64>,
    pub success_all: Option<f64>,
    pub success_hard: Option<f64>,
    pub p: f64,
    pub loss_pi: f64,
    pub loss_v: f64,
    pub entropy: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub value_phase: Option<PhaseStats>,
    pub eval_uniform: Option<f64>,
    pub eval_hard: Option<f64>,
    pub wall_secs: f64,
}

/// Trainer state: network, optimiser, workers and the PPG buffer.
pub struct Trainer {
    pub config: TrainConfig,
    pub net: PolicyNet<f32>,
    pub adam: Adam,
    pub pool: WorkerPool,
    pub rng: ChaCha8Rng,
    pub env_steps: u64,
    pub iteration: u64,
    pub updates: u64,
    buffer: Vec<RolloutBatch>,
    /// Where non-finite minibatches are dumped.
    pub dump_dir: PathBuf,
}

fn minibatches(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let size = n.div_ceil(count);
    idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

#[derive(Serialize)]
struct Dump<'a> {
    what: &'a str,
    update: u64,
    rows: usize,
    observations: &'a [f64],
    actions: Vec<RawAction>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
}

fn check_finite(
    dump_dir: &std::path::Path,
    what: &str,
    value: f64,
    update: u64,
    obs: &ObsBatch,
    actions: Vec<RawAction>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
) -> Result<(), LearnError> {
    if value.is_finite() {
        return Ok(());
    }
    std::fs::create_dir_all(dump_dir)?;
    let path = dump_dir.join(format!("nonfinite-{update}.json"));
    let dump = Dump { what, update, rows: obs.rows, observations: &obs.data, actions, advantages, returns };
    std::fs::write(&path, serde_json::to_vec(&dump)?)?;
    Err(LearnError::NonFinite { what: what.into(), update, dump: path.display().to_string() })
}

/// The `[batch, bins]` log-probabilities of every head, for the KL anchor.
pub fn policy_log_probs(net: &PolicyNet<f32>, obs: &ObsBatch, chunk: usize) -> Result<[Vec<f64>; 4], LearnError> {
    let mut out: [Vec<f64>; 4] = Default::default();
    let all: Vec<usize> = (0..obs.batch).collect();
    for idx in all.chunks(chunk.max(1)) {
        let sub = obs.select(idx);
        let mut g = Graph::new();
        let heads = net.forward(&mut g, &sub, Want::default())?;
        for h in 0..4 {
            out[h].extend(g.value(heads.logp[h]).data().iter().map(|&v| v as f64));
        }
    }
    Ok(out)
}

/// Mean factorised `KL(old ‖ net)` over `obs`, computed without a tape.
pub fn mean_kl(net: &PolicyNet<f32>, obs: &ObsBatch, old: &[Vec<f64>; 4]) -> Result<f64, LearnError> {
    let new = policy_log_probs(net, obs, 1024)?;
    let mut total = 0.0;
    for h in 0..4 {
        for (&lo, &ln) in old[h].iter().zip(&new[h]) {
            let p = lo.exp();
            if p > 0.0 {
                total += p * (lo - ln);
            }
        }
    }
    Ok(total / obs.batch.max(1) as f64)
}

fn rows_of(rows: &[Vec<f64>; 4], sizes: [usize; 4], idx: &[usize]) -> [Vec<f64>; 4] {
    std::array::from_fn(|h| {
        let n = sizes[h];
        idx.iter().flat_map(|&i| rows[h][i * n..(i + 1) * n].iter().copied()).collect()
    })
}

/// Concatenation of several rollout batches' observations and returns.
pub fn merge_buffer(buffer: &[RolloutBatch]) -> (ObsBatch, Vec<f64>) {
    let rows = buffer.first().map_or(0, |b| b.obs.rows);
    let mut obs = ObsBatch { batch: 0, rows, data: Vec::new(), mask: Vec::new() };
    let mut returns = Vec::new();
    for b in buffer {
        obs.batch += b.obs.batch;
        obs.data.extend_from_slice(&b.obs.data);
        obs.mask.extend_from_slice(&b.obs.mask);
        returns.extend_from_slice(&b.returns);
    }
    (obs, returns)
}

/// One PPO pass (`n_epochs` × `n_minibatches`) over `batch`.
pub fn policy_phase(
    net: &mut PolicyNet<f32>,
    adam: &Adam,
    config: &TrainConfig,
    batch: &RolloutBatch,
    rng: &mut ChaCha8Rng,
    updates: &mut u64,
    dump_dir: &std::path::Path,
) -> Result<PhaseStats, LearnError> {
    let adv = normalize(&batch.advantages);
    let variant = net.config().variant;
    let train_value = match (config.algorithm, variant) {
        (Algorithm::Ppg, ArchVariant::Shared) => false,
        _ => config.vf_coef > 0.0,
    };
    let want = Want { value: train_value, aux: false };
    let mut stats = PhaseStats::default();
    let mut count = 0.0;
    for _ in 0..config.n_epochs {
        for idx in minibatches(batch.len(), config.n_minibatches, rng) {
            let obs = batch.obs.select(&idx);
            let actions: Vec<RawAction> = idx.iter().map(|&i| batch.actions[i]).collect();
            let old: Vec<f64> = idx.iter().map(|&i| batch.log_probs[i]).collect();
            let a: Vec<f64> = idx.iter().map(|&i| adv[i]).collect();
            let ret: Vec<f64> = idx.iter().map(|&i| batch.returns[i]).collect();
            let mut g = Graph::new();
            let heads = net.forward(&mut g, &obs, want)?;
            let (logp, entropy) = evaluate_actions(&mut g, &heads, &actions)?;
            let lpi = ppo_policy_loss(&mut g, logp, entropy, &old, &a, config.clip_eps, config.entropy_coef)?;
            let mut loss = lpi;
            if let Some(v) = heads.value {
                let lv = value_loss(&mut g, v, &ret)?;
                stats.loss_v += g.value(lv).item() as f64;
                let lv = g.scale(lv, config.vf_coef);
                loss = g.add(loss, lv)?;
            }
            let total = g.value(loss).item() as f64;
            check_finite(dump_dir, "policy loss", total, *updates, &obs, actions.clone(), a.clone(), ret.clone())?;
            stats.loss_pi += g.value(lpi).item() as f64;
            let ent = g.value(entropy).data();
            stats.entropy += ent.iter().map(|&e| e as f64).sum::<f64>() / ent.len() as f64;
            let lp = g.value(logp).data();
            let clipped = lp
                .iter()
                .zip(&old)
                .filter(|(&n, &o)| ((n as f64 - o).exp() - 1.0).abs() > config.clip_eps)
                .count();
            stats.clip_fraction += clipped as f64 / lp.len() as f64;
            g.backward(loss, &mut net.params)?;
            let norm = net.params.clip_grad_norm(config.max_grad_norm);
            check_finite(dump_dir, "gradient norm", norm, *updates, &obs, actions, a, ret)?;
            stats.grad_norm += norm;
            adam.step(&mut net.params);
            *updates += 1;
            count += 1.0;
        }
    }
    stats.loss_pi /= count;
    stats.loss_v /= count;
    stats.entropy /= count;
    stats.clip_fraction /= count;
    stats.grad_norm /= count;
    stats.updates = count as u64;
    // Approximate KL between the collecting policy and the updated one.
    let new = policy_log_probs(net, &batch.obs, 1024)?;
    let sizes = net.config().head_sizes();
    let mut kl = 0.0;
    for (i, a) in batch.actions.iter().enumerate() {
        let d = ActionDistributions { log_probs: rows_of(&new, sizes, &[i]) };
        kl += batch.log_probs[i] - d.log_prob(*a);
    }
    stats.kl = kl / batch.len().max(1) as f64;
    Ok(stats)
}

/// PPG value phase: `e_v` epochs of `L^V + β·KL(π_old ‖ π)` over the
/// buffer, with π_old frozen right before the phase. The dual variant
/// regresses the auxiliary head under the KL anchor and also trains its
/// separate value network.
pub fn value_phase(
    net: &mut PolicyNet<f32>,
    adam: &Adam,
    config: &TrainConfig,
    obs: &ObsBatch,
    returns: &[f64],
    rng: &mut ChaCha8Rng,
    updates: &mut u64,
    dump_dir: &std::path::Path,
) -> Result<PhaseStats, LearnError> {
    let old = policy_log_probs(net, obs, 1024)?;
    let sizes = net.config().head_sizes();
    let dual = net.config().variant == ArchVariant::Dual;
    let want = Want { value: true, aux: dual };
    let mut stats = PhaseStats::default();
    let mut count = 0.0;
    for _ in 0..config.e_v {
        for idx in minibatches(obs.batch, config.value_minibatches, rng) {
            let sub = obs.select(&idx);
            let ret: Vec<f64> = idx.iter().map(|&i| returns[i]).collect();
            let anchor = rows_of(&old, sizes, &idx);
            let mut g = Graph::new();
            let heads = net.forward(&mut g, &sub, want)?;
            let head = if dual { heads.aux_value } else { heads.value }.expect("value requested");
            let (mut loss, kl) = joint_loss(&mut g, head, &ret, &anchor, &heads.logp, config.beta_clone)?;
            if dual {
                let lv = value_loss(&mut g, heads.value.expect("value requested"), &ret)?;
                stats.loss_v += g.value(lv).item() as f64;
                loss = g.add(loss, lv)?;
            } else {
                let lv = g.value(loss).item() as f64 - config.beta_clone * g.value(kl).item() as f64;
                stats.loss_v += lv;
            }
            let total = g.value(loss).item() as f64;
            check_finite(dump_dir, "joint loss", total, *updates, &sub, Vec::new(), Vec::new(), ret.clone())?;
            g.backward(loss, &mut net.params)?;
            let norm = net.params.clip_grad_norm(config.max_grad_norm);
            check_finite(dump_dir, "gradient norm", norm, *updates, &sub, Vec::new(), Vec::new(), ret)?;
            stats.grad_norm += norm;
            adam.step(&mut net.params);
            *updates += 1;
            count += 1.0;
        }
    }
    stats.loss_v /= count;
    stats.grad_norm /= count;
    stats.updates = count as u64;
    stats.kl = mean_kl(net, obs, &old)?;
    Ok(stats)
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, LearnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = PolicyNet::new(config.network, &mut rng)?;
        let curriculum = Curriculum::new(config.curriculum)?;
        let pool = WorkerPool::new(&config.env, curriculum, config.n_workers, config.seed)?;
        let adam = Adam::with_lr(config.lr);
        Ok(Self {
            config,
            net,
            adam,
            pool,
            rng,
            env_steps: 0,
            iteration: 0,
            updates: 0,
            buffer: Vec::new(),
            dump_dir: std::env::temp_dir(),
        })
    }

    /// Collection, policy phase and, when due, the value phase.
    pub fn iterate(&mut self) -> Result<IterationMetrics, LearnError> {
        let start = Instant::now();
        let c = &self.config;
        let batch = self.pool.collect(&self.net, c.steps_per_worker(), c.gamma, c.gae_lambda)?;
        self.env_steps += batch.len() as u64;
        self.iteration += 1;
        let pi = policy_phase(&mut self.net, &self.adam, c, &batch, &mut self.rng, &mut self.updates, &self.dump_dir)?;
        let mut value = None;
        let eps = &batch.episodes;
        let mean = |f: &dyn Fn(&crate::rollout::EpisodeStats) -> Option<f64>| {
            let v: Vec<f64> = eps.iter().filter_map(f).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let mean_reward = mean(&|e| Some(e.reward));
        let success_all = mean(&|e| Some(e.success as u8 as f64));
        let success_hard = mean(&|e| e.hard.then_some(e.success as u8 as f64));
        let episodes = eps.len();
        if c.algorithm == Algorithm::Ppg {
            self.buffer.push(batch);
            if self.buffer.len() >= c.n_pi {
                let (obs, returns) = merge_buffer(&self.buffer);
                let c = &self.config;
                value = Some(value_phase(
                    &mut self.net,
                    &self.adam,
                    c,
                    &obs,
                    &returns,
                    &mut self.rng,
                    &mut self.updates,
                    &self.dump_dir,
                )?);
                self.buffer.clear();
            }
        }
        Ok(IterationMetrics {
            step: self.env_steps,
            iteration: self.iteration,
            variant: self.config.variant_name(),
            episodes,
            mean_reward,
            success_all,
            success_hard,
            p: self.pool.curriculum.p(),
            loss_pi: pi.loss_pi,
            loss_v: pi.loss_v,
            entropy: pi.entropy,
            kl: pi.kl,
            clip_fraction: pi.clip_fraction,
            value_phase: value,
            eval_uniform: None,
            eval_hard: None,
            wall_secs: start.elapsed().as_secs_f64(),
        })
    }

    /// Deterministic success on `eval_tasks` uniform and hard widths.
    pub fn evaluate(&self) -> Result<(f64, f64), LearnError> {
        let c = &self.config;
        let uniform = crate::eval::uniform_widths(&c.curriculum, c.eval_tasks, c.eval_seed);
        let u = crate::eval::evaluate_widths(&self.net, &c.env, &uniform, c.eval_seed, true)?;
        let h = crate::eval::evaluate_hard(&self.net, &c.env, &c.curriculum, c.eval_tasks, c.eval_seed)?;
        Ok((u.success_rate, h.success_rate))
    }

    pub fn buffered_batches(&self) -> usize {
        self.buffer.len()
    }
}
