//! Deterministic-policy evaluation on fixed width sets.

use bridge_autodiff::Graph;
use bridge_core::curriculum::{sample_width, CurriculumConfig};
use bridge_core::env::{BridgeEnv, EnvConfig, Instruction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_action, ActionDistributions};
use crate::network::{ObsBatch, PolicyNet, Want};
use crate::LearnError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthBin {
    pub lo: f64,
    pub hi: f64,
    pub tasks: usize,
    pub successes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_tasks: usize,
    pub success_rate: f64,
    pub seed: u64,
    pub deterministic: bool,
    pub widths: Vec<f64>,
    pub successes: Vec<bool>,
    /// Blocks resting inside the valley at the end of each episode.
    pub blocks_used: Vec<usize>,
    pub histogram: Vec<WidthBin>,
    /// `blocks_histogram[k]` counts episodes that ended with `k` blocks whose centre is inside the valley.
    pub blocks_histogram: Vec<usize>,
}

/// Final state of one evaluation episode.
#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub width: f64,
    pub success: bool,
    pub blocks_used: usize,
    pub instructions: Vec<Instruction>,
}

/// Runs one episode per width in lock step. Sampling (when not
/// deterministic) draws from one RNG per episode seeded from `seed`.
pub fn run_episodes(
    net: &PolicyNet<f32>,
    env: &EnvConfig,
    widths: &[f64],
    seed: u64,
    deterministic: bool,
) -> Result<Vec<EpisodeOutcome>, LearnError> {
    let mut envs = Vec::with_capacity(widths.len());
    let mut rngs = Vec::with_capacity(widths.len());
    for (i, &w) in widths.iter().enumerate() {
        let mut e = BridgeEnv::new(*env)?;
        e.reset(seed.wrapping_add(i as u64), w)?;
        envs.push(e);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        rngs.push(rng);
    }
    let mut instructions = vec![Vec::new(); widths.len()];
    let mut last = vec![None; widths.len()];
    for _ in 0..env.horizon {
        let live: Vec<usize> = (0..envs.len()).filter(|&i| !envs[i].is_done()).collect();
        if live.is_empty() {
            break;
        }
        let obs: Vec<_> = live.iter().map(|&i| envs[i].observe()).collect();
        let obs = ObsBatch::from_observations(&obs)?;
        let mut g = Graph::new();
        let heads = net.forward(&mut g, &obs, Want::default())?;
        let mut actions = vec![None; envs.len()];
        for (k, &i) in live.iter().enumerate() {
            let d = ActionDistributions::from_heads(&g, &heads, k);
            let a = sample_action(&d, &mut rngs[i], deterministic).0;
            instructions[i].push(envs[i].decode_action(a)?);
            actions[i] = Some(a);
        }
        let steps: Vec<_> = envs
            .par_iter_mut()
            .zip(actions.par_iter())
            .map(|(e, a)| a.map(|a| e.step(a)).transpose())
            .collect::<Result<_, _>>()?;
        for (i, s) in steps.into_iter().enumerate() {
            if let Some(s) = s {
                last[i] = Some((s.info.success, s.info.blocks_in_valley));
            }
        }
    }
    Ok(widths
        .iter()
        .zip(last)
        .zip(instructions)
        .map(|((&width, l), instructions)| {
            let (success, blocks_used) = l.unwrap_or((false, 0));
            EpisodeOutcome { width, success, blocks_used, instructions }
        })
        .collect())
}

/// Success statistics over the given widths.
pub fn evaluate_widths(
    net: &PolicyNet<f32>,
    env: &EnvConfig,
    widths: &[f64],
    seed: u64,
    deterministic: bool,
) -> Result<EvalReport, LearnError> {
    if widths.is_empty() {
        return Err(LearnError::InvalidConfig("evaluation needs at least one task".into()));
    }
    let out = run_episodes(net, env, widths, seed, deterministic)?;
    let n = out.len();
    let successes: Vec<bool> = out.iter().map(|o| o.success).collect();
    let blocks_used: Vec<usize> = out.iter().map(|o| o.blocks_used).collect();
    let mut blocks_histogram = vec![0; env.n_blocks() + 1];
    for &b in &blocks_used {
        blocks_histogram[b.min(env.n_blocks())] += 1;
    }
    let (lo, hi) = widths.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &w| (a.min(w), b.max(w)));
    let n_bins = 10;
    let span = (hi - lo).max(1e-12);
    let mut histogram: Vec<WidthBin> = (0..n_bins)
        .map(|k| WidthBin {
            lo: lo + span * k as f64 / n_bins as f64,
            hi: lo + span * (k + 1) as f64 / n_bins as f64,
            tasks: 0,
            successes: 0,
        })
        .collect();
    for o in &out {
        let k = (((o.width - lo) / span * n_bins as f64) as usize).min(n_bins - 1);
        histogram[k].tasks += 1;
        histogram[k].successes += o.success as usize;
    }
    Ok(EvalReport {
        n_tasks: n,
        success_rate: successes.iter().filter(|&&s| s).count() as f64 / n as f64,
        seed,
        deterministic,
        widths: widths.to_vec(),
        successes,
        blocks_used,
        histogram,
        blocks_histogram,
    })
}

/// `n` widths uniform on `[min_width, max_width]`.
pub fn uniform_widths(curriculum: &CurriculumConfig, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_width(curriculum, 0.0, &mut rng)).collect()
}

/// `n` widths uniform on the hard band `(hard_min_width, max_width]`.
pub fn hard_widths(curriculum: &CurriculumConfig, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            curriculum.max_width - u * (curriculum.max_width - curriculum.hard_min_width)
        })
        .collect()
}

/// Deterministic-mode success on `n_tasks` hard widths.
pub fn evaluate_hard(
    net: &PolicyNet<f32>,
    env: &EnvConfig,
    curriculum: &CurriculumConfig,
    n_tasks: usize,
    seed: u64,
) -> Result<EvalReport, LearnError> {
    evaluate_widths(net, env, &hard_widths(curriculum, n_tasks, seed), seed, true)
}
