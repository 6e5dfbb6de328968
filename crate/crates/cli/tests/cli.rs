//! End-to-end runs of the `bridge` binary on a tiny configuration.

use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "env.scene.n_blocks=2",
    "network.n_blocks=2",
    "network.feature_dim=8",
    "network.n_attention=1",
    "n_workers=2",
    "n_steps=30",
    "n_minibatches=2",
    "n_epochs=1",
    "n_pi=2",
    "e_v=1",
    "value_minibatches=2",
    "total_steps=120",
    "eval_every=60",
    "eval_tasks=4",
];

fn bridge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bridge")).args(args).output().expect("spawn bridge")
}

fn train_tiny(out: &Path) -> Output {
    let mut args = vec!["train", "--quiet", "--out", out.to_str().unwrap()];
    for s in TINY {
        args.extend(["--set", s]);
    }
    bridge(&args)
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn train_eval_rollout_render_export() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = train_tiny(&run);
    assert!(o.status.success(), "{}", text(&o));
    for f in ["metrics.jsonl", "best.ckpt", "last.ckpt", "summary.json", "config.toml"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let ckpt = run.join("last.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let o = bridge(&["inspect-checkpoint", ckpt, "--config"]);
    assert!(o.status.success(), "{}", text(&o));
    let s = text(&o);
    assert!(s.contains("ppg-shared") && s.contains("env steps    120"), "{s}");

    let report = dir.path().join("eval.json");
    let args = ["eval", ckpt, "--tasks", "3", "--seed", "4", "--json", report.to_str().unwrap()];
    let first = bridge(&args);
    assert!(first.status.success(), "{}", text(&first));
    let a = std::fs::read_to_string(&report).unwrap();
    let second = bridge(&args);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(a, std::fs::read_to_string(&report).unwrap());
    let json: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(json["n_tasks"], 3);

    let replay = dir.path().join("replay.json");
    let o = bridge(&["rollout", ckpt, "--width", "0.1", "--out", replay.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));

    let frames = dir.path().join("frames");
    let o = bridge(&["render", replay.to_str().unwrap(), "--out", frames.to_str().unwrap(), "--png", "--scale", "200"]);
    assert!(o.status.success(), "{}", text(&o));
    // 30 steps give 31 frames.
    let svgs = std::fs::read_dir(&frames).unwrap().filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "svg");
    assert_eq!(svgs.count(), 31);
    let png = std::fs::read(frames.join("frame-030.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");

    let bp = dir.path().join("blueprint.json");
    let o = bridge(&["export", replay.to_str().unwrap(), "--out", bp.to_str().unwrap(), "--check"]);
    assert!(o.status.success(), "{}", text(&o));
    let bp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&bp).unwrap()).unwrap();
    assert_eq!(bp["format"], "bridge-blueprint");
    assert_eq!(bp["records"].as_array().unwrap().len(), 30);
    assert!(text(&o).contains("max position error 0.00e0"), "{}", text(&o));
}

#[test]
fn resume_continues_the_step_counter() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(train_tiny(&run).status.success());
    let ckpt = run.join("last.ckpt");
    let more = dir.path().join("more");
    let o = bridge(&[
        "train",
        "--quiet",
        "--resume",
        ckpt.to_str().unwrap(),
        "--set",
        "total_steps=240",
        "--out",
        more.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(more.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["env_steps"], 240);
    assert_eq!(summary["iterations"], 4);
}

#[test]
fn print_config_layers_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.toml");
    std::fs::write(&file, "seed = 7\ntotal_steps = 2e6\n[network]\nfeature_dim = 16\n").unwrap();
    let o = bridge(&["train", "--print-config", "--config", file.to_str().unwrap(), "--set", "seed=9", "--set", "algorithm=ppo"]);
    assert!(o.status.success(), "{}", text(&o));
    let cfg: toml::Table = toml::from_str(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(cfg["seed"].as_integer(), Some(9));
    assert_eq!(cfg["total_steps"].as_integer(), Some(2_000_000));
    assert_eq!(cfg["algorithm"].as_str(), Some("ppo"));
    assert_eq!(cfg["network"]["feature_dim"].as_integer(), Some(16));
    assert_eq!(cfg["n_workers"].as_integer(), Some(32));
}

#[test]
fn usage_errors_exit_with_1() {
    assert_eq!(bridge(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bridge(&["eval"]).status.code(), Some(1));
    assert_eq!(bridge(&["train", "--print-config", "--set", "network.nope=1"]).status.code(), Some(1));
    assert_eq!(bridge(&["train", "--print-config", "--set", "seed"]).status.code(), Some(1));
    assert_eq!(bridge(&["train", "--print-config", "--set", "n_workers=0"]).status.code(), Some(1));
    assert_eq!(bridge(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_files_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ckpt");
    assert_eq!(bridge(&["inspect-checkpoint", missing.to_str().unwrap()]).status.code(), Some(2));

    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    let o = bridge(&["eval", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("bad magic"), "{}", text(&o));

    let mut future = b"BCKP".to_vec();
    future.extend_from_slice(&99u16.to_le_bytes());
    std::fs::write(&junk, future).unwrap();
    let o = bridge(&["inspect-checkpoint", junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("unsupported checkpoint version 99"), "{}", text(&o));

    let replay = dir.path().join("r.json");
    std::fs::write(&replay, r#"{"format": "something-else", "version": 1}"#).unwrap();
    assert_eq!(bridge(&["render", replay.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bridge(&["export", replay.to_str().unwrap()]).status.code(), Some(2));
}
