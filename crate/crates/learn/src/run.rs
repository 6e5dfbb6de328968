//! The outer training loop: iterations, periodic evaluation, metrics stream
//! and checkpoints.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::trainer::{IterationMetrics, Trainer};
use crate::LearnError;

/// Ends a run early once both evaluation scores have been reached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub uniform: f64,
    pub hard: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env_steps: u64,
    pub iterations: u64,
    pub best_uniform: f64,
    pub best_hard: f64,
    /// First evaluation step at which each score reached 0.5 / 0.7.
    pub first_uniform_05: Option<u64>,
    pub first_uniform_07: Option<u64>,
    pub first_hard_05: Option<u64>,
    pub wall_secs: f64,
}

impl RunSummary {
    fn observe(&mut self, step: u64, uniform: f64, hard: f64) {
        let first = |slot: &mut Option<u64>, v: f64, t: f64| {
            if v >= t && slot.is_none() {
                *slot = Some(step);
            }
        };
        first(&mut self.first_uniform_05, uniform, 0.5);
        first(&mut self.first_uniform_07, uniform, 0.7);
        first(&mut self.first_hard_05, hard, 0.5);
        self.best_uniform = self.best_uniform.max(uniform);
        self.best_hard = self.best_hard.max(hard);
    }
}

pub struct RunOutput {
    pub dir: PathBuf,
}

impl RunOutput {
    pub fn new(dir: &Path) -> Result<Self, LearnError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.jsonl")
    }

    /// Checkpoint with the highest uniform evaluation score so far.
    pub fn best_path(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }

    pub fn last_path(&self) -> PathBuf {
        self.dir.join("last.ckpt")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.dir.join("summary.json")
    }
}

/// Trains until `total_steps` (or `stop`), appending one JSON line per
/// iteration to `metrics.jsonl`. `on_iteration` sees every record.
pub fn run(
    trainer: &mut Trainer,
    out: &RunOutput,
    stop: Option<StopRule>,
    mut on_iteration: impl FnMut(&IterationMetrics),
) -> Result<RunSummary, LearnError> {
    let start = std::time::Instant::now();
    trainer.dump_dir = out.dir.clone();
    let mut metrics = OpenOptions::new().create(true).append(true).open(out.metrics_path())?;
    let mut summary = RunSummary::default();
    let eval_every = trainer.config.eval_every;
    let ckpt_every = trainer.config.checkpoint_every;
    let mut best = f64::NEG_INFINITY;
    while trainer.env_steps < trainer.config.total_steps {
        let before = trainer.env_steps;
        let mut m = trainer.iterate()?;
        let crossed = |every: u64| every > 0 && before / every != trainer.env_steps / every;
        let last = trainer.env_steps >= trainer.config.total_steps;
        if crossed(eval_every) || (last && eval_every > 0) {
            let (u, h) = trainer.evaluate()?;
            m.eval_uniform = Some(u);
            m.eval_hard = Some(h);
            summary.observe(trainer.env_steps, u, h);
            if u > best {
                best = u;
                Checkpoint::from_trainer(trainer).save(&out.best_path())?;
            }
        }
        if crossed(ckpt_every) {
            let path = out.dir.join(format!("step-{:09}.ckpt", trainer.env_steps));
            Checkpoint::from_trainer(trainer).save(&path)?;
        }
        m.wall_secs = start.elapsed().as_secs_f64();
        serde_json::to_writer(&mut metrics, &m)?;
        metrics.write_all(b"\n")?;
        metrics.flush()?;
        on_iteration(&m);
        if let Some(s) = stop.filter(|_| m.eval_uniform.is_some()) {
            if summary.best_uniform >= s.uniform && summary.best_hard >= s.hard {
                break;
            }
        }
    }
    Checkpoint::from_trainer(trainer).save(&out.last_path())?;
    summary.env_steps = trainer.env_steps;
    summary.iterations = trainer.iteration;
    summary.wall_secs = start.elapsed().as_secs_f64();
    std::fs::write(out.summary_path(), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
