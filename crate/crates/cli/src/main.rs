//! `bridge`: train blueprint policies, evaluate them, and turn episodes into
//! replays, rendered frames and blueprints.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, unknown
//! configuration keys) and 2 when a file cannot be read or is not valid.

mod config;
mod raster;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bridge_core::blueprint::Blueprint;
use bridge_core::env::{BridgeEnv, Target};
use bridge_core::physics::normalize_angle;
use bridge_core::render::{render_svg, FrameLabel, RenderOptions};
use bridge_core::replay::Replay;
use bridge_learn::eval::{evaluate_widths, hard_widths, run_episodes, uniform_widths};
use bridge_learn::{run, Checkpoint, RunOutput, StopRule, Trainer, CHECKPOINT_VERSION};
use clap::{Parser, Subcommand, ValueEnum};

/// Marks an error as the caller's fault (exit status 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "bridge", version, about = "Blueprint policies for block bridges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes metrics.jsonl, checkpoints and summary.json.
    Train(TrainArgs),
    /// Deterministic (or sampled) success rate of a checkpoint.
    Eval(EvalArgs),
    /// Run one episode with a checkpoint and save it as a replay.
    Rollout(RolloutArgs),
    /// Render every frame of a replay as SVG (and optionally PNG).
    Render(RenderArgs),
    /// Convert a replay into a blueprint instruction file.
    Export(ExportArgs),
    /// Print what a checkpoint contains.
    InspectCheckpoint(InspectArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    /// TOML file layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set network.feature_dim=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory for metrics and checkpoints.
    #[arg(long, env = "BRIDGE_OUT", default_value = "runs/latest")]
    out: PathBuf,
    /// Continue from a checkpoint. Its configuration is the base layer.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop once deterministic uniform-width success reaches this value.
    #[arg(long)]
    stop_uniform: Option<f64>,
    /// Stop once deterministic hard-width success reaches this value.
    #[arg(long)]
    stop_hard: Option<f64>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    /// Widths uniform over the hard band.
    Hard,
    /// Widths uniform over the whole curriculum range.
    Uniform,
    /// Every task at `--width`.
    Width,
}

#[derive(clap::Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "hard")]
    mode: EvalMode,
    #[arg(long, default_value_t = 100)]
    tasks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Valley width in metres for `--mode width`.
    #[arg(long)]
    width: Option<f64>,
    /// Sample actions instead of taking the most likely ones.
    #[arg(long)]
    stochastic: bool,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RolloutArgs {
    checkpoint: PathBuf,
    /// Valley width in metres.
    #[arg(long)]
    width: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    stochastic: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct RenderArgs {
    replay: PathBuf,
    /// Directory for `frame-NNN.svg` (and `.png`).
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    png: bool,
    /// Pixels per metre.
    #[arg(long, default_value_t = 1000.0)]
    scale: f64,
}

#[derive(clap::Args)]
struct ExportArgs {
    replay: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Re-simulate the blueprint and compare the final poses with the replay.
    #[arg(long)]
    check: bool,
}

#[derive(clap::Args)]
struct InspectArgs {
    checkpoint: PathBuf,
    /// Also print the training configuration as TOML.
    #[arg(long)]
    config: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Rollout(a) => rollout(a),
        Command::Render(a) => render(a),
        Command::Export(a) => export(a),
        Command::InspectCheckpoint(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_replay(path: &Path) -> Result<Replay> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Replay::from_json(&text).with_context(|| format!("parsing replay {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let resumed = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let base = resumed.as_ref().map(|c| c.meta.config.clone()).unwrap_or_default();
    let cfg = config::resolve(&base, a.config.as_deref(), &a.sets)?;
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    if a.print_config {
        print!("{}", toml::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let mut trainer = match resumed {
        Some(mut ckpt) => {
            ckpt.meta.config = cfg;
            ckpt.into_trainer()?
        }
        None => Trainer::new(cfg)?,
    };
    let out = RunOutput::new(&a.out)?;
    std::fs::write(a.out.join("config.toml"), toml::to_string_pretty(&trainer.config)?)?;
    let stop = (a.stop_uniform.is_some() || a.stop_hard.is_some())
        .then(|| StopRule { uniform: a.stop_uniform.unwrap_or(0.0), hard: a.stop_hard.unwrap_or(0.0) });
    if stop.is_some() && trainer.config.eval_every == 0 {
        return Err(UsageError("stop thresholds need eval_every > 0".into()).into());
    }
    let quiet = a.quiet;
    let summary = run(&mut trainer, &out, stop, |m| {
        if quiet {
            return;
        }
        let pct = |x: Option<f64>| x.map_or("   -".to_string(), |v| format!("{:4.0}", 100.0 * v));
        let mut line = format!(
            "step {:>9}  it {:>5}  reward {:7.3}  success {}%  hard {}%  p {:.2}  entropy {:.2}",
            m.step,
            m.iteration,
            m.mean_reward.unwrap_or(f64::NAN),
            pct(m.success_all),
            pct(m.success_hard),
            m.p,
            m.entropy,
        );
        if let (Some(u), Some(h)) = (m.eval_uniform, m.eval_hard) {
            line.push_str(&format!("  eval {:.2}/{:.2}", u, h));
        }
        eprintln!("{line}");
    })?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    if a.tasks == 0 {
        return Err(UsageError("--tasks must be positive".into()).into());
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let net = ckpt.network()?;
    let c = &ckpt.meta.config;
    let widths = match (a.mode, a.width) {
        (EvalMode::Hard, _) => hard_widths(&c.curriculum, a.tasks, a.seed),
        (EvalMode::Uniform, _) => uniform_widths(&c.curriculum, a.tasks, a.seed),
        (EvalMode::Width, Some(w)) => vec![w; a.tasks],
        (EvalMode::Width, None) => return Err(UsageError("--mode width needs --width".into()).into()),
    };
    let report = evaluate_widths(&net, &c.env, &widths, a.seed, !a.stochastic)?;
    println!(
        "success {:.3} over {} tasks (seed {}, {})",
        report.success_rate,
        report.n_tasks,
        report.seed,
        if report.deterministic { "deterministic" } else { "sampled" }
    );
    for bin in report.histogram.iter().filter(|b| b.tasks > 0) {
        println!("  width [{:.4}, {:.4}]  {:>3}/{:<3}", bin.lo, bin.hi, bin.successes, bin.tasks);
    }
    let blocks: Vec<String> = report.blocks_histogram.iter().map(|n| n.to_string()).collect();
    println!("  blocks in valley (0..={}): {}", blocks.len() - 1, blocks.join(" "));
    if let Some(path) = a.json {
        std::fs::write(&path, serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}

fn rollout(a: RolloutArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let net = ckpt.network()?;
    let env_config = ckpt.meta.config.env;
    let episode = run_episodes(&net, &env_config, &[a.width], a.seed, !a.stochastic)?
        .pop()
        .expect("one episode per width");
    let mut env = BridgeEnv::new(env_config)?;
    let replay = Replay::record_episode(&mut env, a.seed, a.width, &episode.instructions)
        .map_err(|e| UsageError(e.to_string()))?;
    std::fs::write(&a.out, replay.to_json())?;
    println!(
        "{} steps, {} placements, success {}",
        replay.steps.len(),
        episode.instructions.iter().filter(|i| i.target != Target::Reset).count(),
        replay.final_success()
    );
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    if !(a.scale > 0.0 && a.scale.is_finite()) {
        return Err(UsageError("--scale must be positive".into()).into());
    }
    let replay = load_replay(&a.replay)?;
    std::fs::create_dir_all(&a.out)?;
    let opts = RenderOptions { scale: a.scale, ..RenderOptions::for_replay(&replay) };
    for i in 0..replay.n_frames() {
        let scene = replay.scene(i)?;
        let reward = i.checked_sub(1).map(|k| &replay.steps[k].reward);
        let svg = render_svg(&scene, &opts, &FrameLabel { step: i, reward });
        std::fs::write(a.out.join(format!("frame-{i:03}.svg")), svg)?;
        if a.png {
            raster::render_png(&scene, &opts).save(a.out.join(format!("frame-{i:03}.png")))?;
        }
    }
    println!("{} frames written to {}", replay.n_frames(), a.out.display());
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    let replay = load_replay(&a.replay)?;
    let bp = Blueprint::from_replay(&replay);
    let json = bp.to_json();
    match &a.out {
        Some(path) => std::fs::write(path, &json)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(json.as_bytes())?;
            stdout.write_all(b"\n")?;
        }
    }
    if a.check {
        let env = bp.resimulate()?;
        let expected = replay.final_scene()?;
        let (mut dp, mut da) = (0.0f64, 0.0f64);
        for (x, y) in env.scene().bodies.iter().zip(&expected.bodies) {
            dp = dp.max((x.state.position - y.state.position).length());
            da = da.max(normalize_angle(x.state.angle - y.state.angle).abs());
        }
        eprintln!(
            "re-simulated: max position error {:.2e} m, max angle error {:.2e} rad, success {} (replay {})",
            dp,
            da,
            env.is_success(),
            replay.final_success()
        );
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let m = &ckpt.meta;
    let c = &m.config;
    println!("format       BCKP v{CHECKPOINT_VERSION}");
    println!("variant      {}", c.variant_name());
    println!("env steps    {}", m.env_steps);
    println!("iterations   {}", m.iteration);
    println!("updates      {}", m.updates);
    println!("curriculum p {:.3}", m.curriculum.p());
    println!("blocks       {}", c.env.n_blocks());
    println!(
        "network      d={} attention={} embed={} ({} tensors, {} scalars)",
        c.network.feature_dim,
        c.network.n_attention,
        c.network.embed_layers,
        ckpt.params.len(),
        ckpt.params.n_scalars()
    );
    if a.config {
        print!("\n{}", toml::to_string_pretty(c)?);
    }
    Ok(())
}
