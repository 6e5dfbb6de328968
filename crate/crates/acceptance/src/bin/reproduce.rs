//! Regenerates the learning artifacts under `results/`.
//!
//! ```text
//! cargo run --release -p bridge-acceptance --bin reproduce -- [EXPERIMENT...] [--seed N]
//! ```

use anyhow::Result;
use bridge_acceptance::{experiment, results_dir, run_dir, train, EXPERIMENTS, SEEDS};
use clap::Parser;

#[derive(Parser)]
#[command(about = "Train the acceptance experiments (all of them by default)")]
struct Args {
    /// Experiment names: ppg-shared, ppo-dual, fixed-p.
    experiments: Vec<String>,
    /// Train only this seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let exps = if args.experiments.is_empty() {
        EXPERIMENTS.iter().collect()
    } else {
        args.experiments.iter().map(|n| experiment(n)).collect::<Result<Vec<_>, _>>()?
    };
    let seeds = args.seed.map_or(SEEDS.to_vec(), |s| vec![s]);
    let results = results_dir();
    for exp in exps {
        for &seed in &seeds {
            eprintln!("== {} seed {} -> {}", exp.name, seed, run_dir(&results, exp, seed).display());
            let summary = train(exp, seed, &results, |m| {
                if let (Some(u), Some(h)) = (m.eval_uniform, m.eval_hard) {
                    eprintln!("   step {:>8}  p {:.2}  eval uniform {:.2}  hard {:.2}", m.step, m.p, u, h);
                }
            })?;
            println!("{} seed {}: {}", exp.name, seed, serde_json::to_string(&summary)?);
        }
    }
    Ok(())
}
