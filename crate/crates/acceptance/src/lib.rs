//! The learning experiments behind the acceptance report and the helpers
//! that read their artifacts back.
//!
//! Each experiment is a configuration file under `configs/` trained for
//! three seeds with a stop rule. Runs land in `results/<experiment>/seed-<n>/`
//! as written by [`bridge_learn::run`]: `metrics.jsonl`, `summary.json`,
//! `best.ckpt` and `last.ckpt`. The `reproduce` binary regenerates them.

use std::path::{Path, PathBuf};

use bridge_learn::{run, IterationMetrics, LearnError, RunOutput, RunSummary, StopRule, TrainConfig, Trainer};
use thiserror::Error;

/// Environment-step budget every learning criterion is judged within.
pub const STEP_BUDGET: u64 = 2_000_000;
pub const SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Error)]
pub enum AcceptanceError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: toml::de::Error },
    #[error("{path}, line {line}: {source}")]
    Metrics { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
}

#[derive(Clone, Copy, Debug)]
pub struct Experiment {
    pub name: &'static str,
    /// File name under `configs/`.
    pub config: &'static str,
    pub stop: StopRule,
}

pub const EXPERIMENTS: [Experiment; 3] = [
    // Stops once both the uniform target and the hard-case threshold are met.
    Experiment { name: "ppg-shared", config: "scaled.toml", stop: StopRule { uniform: 0.7, hard: 0.5 } },
    Experiment { name: "ppo-dual", config: "scaled-ppo-dual.toml", stop: StopRule { uniform: 0.5, hard: 0.0 } },
    Experiment { name: "fixed-p", config: "scaled-fixed-p.toml", stop: StopRule { uniform: 0.0, hard: 0.5 } },
];

pub fn experiment(name: &str) -> Result<&'static Experiment, AcceptanceError> {
    EXPERIMENTS.iter().find(|e| e.name == name).ok_or_else(|| AcceptanceError::UnknownExperiment(name.into()))
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// `$BRIDGE_RESULTS`, or `results/` at the workspace root.
pub fn results_dir() -> PathBuf {
    std::env::var_os("BRIDGE_RESULTS").map(PathBuf::from).unwrap_or_else(|| workspace_root().join("results"))
}

pub fn run_dir(results: &Path, exp: &Experiment, seed: u64) -> PathBuf {
    results.join(exp.name).join(format!("seed-{seed}"))
}

pub fn load_config(exp: &Experiment, seed: u64) -> Result<TrainConfig, AcceptanceError> {
    let path = workspace_root().join("configs").join(exp.config);
    let text = std::fs::read_to_string(&path).map_err(|source| AcceptanceError::Io { path: path.clone(), source })?;
    let mut config: TrainConfig = toml::from_str(&text).map_err(|source| AcceptanceError::Config { path, source })?;
    config.seed = seed;
    config.total_steps = config.total_steps.min(STEP_BUDGET);
    Ok(config)
}

/// Trains one seed from scratch, replacing any earlier artifacts.
pub fn train(
    exp: &Experiment,
    seed: u64,
    results: &Path,
    on_iteration: impl FnMut(&IterationMetrics),
) -> Result<RunSummary, AcceptanceError> {
    let config = load_config(exp, seed)?;
    let dir = run_dir(results, exp, seed);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|source| AcceptanceError::Io { path: dir.clone(), source })?;
    }
    let out = RunOutput::new(&dir)?;
    let mut trainer = Trainer::new(config)?;
    Ok(run(&mut trainer, &out, Some(exp.stop), on_iteration)?)
}

/// One periodic deterministic evaluation from `metrics.jsonl`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub step: u64,
    pub uniform: f64,
    pub hard: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Uniform,
    Hard,
}

impl EvalPoint {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Uniform => self.uniform,
            Metric::Hard => self.hard,
        }
    }
}

pub fn read_evals(dir: &Path) -> Result<Vec<EvalPoint>, AcceptanceError> {
    let path = dir.join("metrics.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|source| AcceptanceError::Io { path: path.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let m: IterationMetrics = serde_json::from_str(line)
            .map_err(|source| AcceptanceError::Metrics { path: path.clone(), line: i + 1, source })?;
        if let (Some(uniform), Some(hard)) = (m.eval_uniform, m.eval_hard) {
            out.push(EvalPoint { step: m.step, uniform, hard });
        }
    }
    Ok(out)
}

/// First evaluation step within `budget` at which `metric >= threshold`.
pub fn first_step(points: &[EvalPoint], metric: Metric, threshold: f64, budget: u64) -> Option<u64> {
    points.iter().find(|p| p.step <= budget && p.get(metric) >= threshold).map(|p| p.step)
}

/// Highest score within `budget`.
pub fn best(points: &[EvalPoint], metric: Metric, budget: u64) -> Option<f64> {
    points.iter().filter(|p| p.step <= budget).map(|p| p.get(metric)).reduce(f64::max)
}

/// Median of step counts where `None` (never reached) ranks above every
/// number. For an even count the lower of the two middle values is taken.
pub fn median_steps(values: &[Option<u64>]) -> Option<u64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<u64> = values.iter().map(|x| x.unwrap_or(u64::MAX)).collect();
    v.sort_unstable();
    let m = v[(v.len() - 1) / 2];
    (m != u64::MAX).then_some(m)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(u64, f64, f64)]) -> Vec<EvalPoint> {
        v.iter().map(|&(step, uniform, hard)| EvalPoint { step, uniform, hard }).collect()
    }

    #[test]
    fn first_step_respects_threshold_and_budget() {
        let p = pts(&[(10, 0.2, 0.0), (20, 0.5, 0.1), (30, 0.8, 0.6)]);
        assert_eq!(first_step(&p, Metric::Uniform, 0.5, 100), Some(20));
        assert_eq!(first_step(&p, Metric::Hard, 0.5, 100), Some(30));
        assert_eq!(first_step(&p, Metric::Hard, 0.5, 29), None);
        assert_eq!(best(&p, Metric::Uniform, 25), Some(0.5));
        assert_eq!(best(&p, Metric::Uniform, 5), None);
    }

    #[test]
    fn unreached_runs_rank_last_in_the_median() {
        assert_eq!(median_steps(&[Some(5), None, Some(3)]), Some(5));
        assert_eq!(median_steps(&[None, None, Some(3)]), None);
        assert_eq!(median_steps(&[Some(9), Some(1), Some(4)]), Some(4));
        assert_eq!(median_steps(&[]), None);
        assert_eq!(median(&[0.3, 0.9, 0.7]), Some(0.7));
        assert_eq!(median(&[0.2, 0.4]), Some(0.30000000000000004));
    }

    #[test]
    fn shipped_configs_load_and_validate() {
        for exp in &EXPERIMENTS {
            let c = load_config(exp, 7).unwrap();
            c.validate().unwrap();
            assert_eq!(c.seed, 7);
            assert!(c.total_steps <= STEP_BUDGET);
            assert_eq!(c.env.n_blocks(), 3);
        }
        assert!(experiment("nope").is_err());
    }
}
