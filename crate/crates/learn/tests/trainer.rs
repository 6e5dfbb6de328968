use bridge_autodiff::{Graph, Tensor};
use bridge_core::curriculum::{Curriculum, CurriculumConfig};
use bridge_learn::gae::{gae, normalize};
use bridge_learn::losses::{clipped_surrogate, factorized_kl, joint_loss, ppo_policy_loss, ppo_surrogate, value_loss};
use bridge_learn::trainer::{merge_buffer, policy_log_probs, policy_phase, value_phase};
use bridge_learn::{
    eval, Algorithm, ArchVariant, Checkpoint, LearnError, PolicyNet, TrainConfig, Trainer, WorkerPool,
    CHECKPOINT_VERSION,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three blocks, narrow valleys and a tiny network: fast enough for unit tests.
fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.env.scene.n_blocks = 3;
    c.env.scene.max_width = 0.18;
    c.network.n_blocks = 3;
    c.network.feature_dim = 8;
    c.network.n_attention = 1;
    c.curriculum = CurriculumConfig { max_width: 0.18, hard_min_width: 0.144, ..CurriculumConfig::default() };
    c.n_workers = 2;
    c.n_steps = 45;
    c.n_minibatches = 3;
    c.n_epochs = 2;
    c.n_pi = 2;
    c.e_v = 2;
    c.value_minibatches = 3;
    c.total_steps = 360;
    c
}

/// Direct double loop over the GAE definition: Â_t = Σ_l (γλ)^l δ_{t+l}
/// up to the end of the episode.
fn gae_oracle(r: &[f64], v: &[f64], done: &[bool], next: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let value_after = |t: usize| if done[t] { 0.0 } else if t + 1 == n { next } else { v[t + 1] };
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for l in t..n {
                let delta = r[l] + gamma * value_after(l) - v[l];
                total += (gamma * lambda).powi((l - t) as i32) * delta;
                if done[l] {
                    break;
                }
            }
            total
        })
        .collect()
}

#[test]
fn gae_terminal_step_is_reward_minus_value() {
    let a = gae(&[0.7], &[0.3], &[true], 5.0, 0.97, 0.95);
    assert_eq!(a, vec![0.7 - 0.3]);
}

#[test]
fn gae_two_step_example() {
    let a = gae(&[0.0, 1.0], &[0.5, 0.2], &[false, true], 0.0, 0.97, 0.95);
    let first = (0.0 + 0.97 * 0.2 - 0.5) + 0.97 * 0.95 * (1.0 - 0.2);
    assert!((a[0] - first).abs() < 1e-12);
    assert!((a[0] - 0.4312).abs() < 1e-12);
    assert!((a[1] - 0.8).abs() < 1e-12);
}

#[test]
fn gae_with_zero_lambda_is_one_step_td() {
    let (r, v, d) = ([0.1, -0.4, 0.9], [0.3, 0.2, 0.6], [false, false, false]);
    let a = gae(&r, &v, &d, 0.5, 0.97, 0.0);
    assert_eq!(a, vec![r[0] + 0.97 * v[1] - v[0], r[1] + 0.97 * v[2] - v[1], r[2] + 0.97 * 0.5 - v[2]]);
}

proptest! {
    #[test]
    fn gae_matches_double_loop(
        steps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, prop::bool::weighted(0.1)), 50),
        next in -1.0..1.0f64,
        gamma in 0.5..1.0f64,
        lambda in 0.0..1.0f64,
    ) {
        let r: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let v: Vec<f64> = steps.iter().map(|s| s.1).collect();
        let d: Vec<bool> = steps.iter().map(|s| s.2).collect();
        let fast = gae(&r, &v, &d, next, gamma, lambda);
        let slow = gae_oracle(&r, &v, &d, next, gamma, lambda);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn clipped_surrogate_never_exceeds_bound(ratio in 0.0..5.0f64, adv in -3.0..3.0f64, eps in 0.01..0.99f64) {
        prop_assert!(clipped_surrogate(ratio, adv, eps) <= (1.0 + eps) * adv.abs() + 1e-12);
    }

    #[test]
    fn kl_is_non_negative(raw in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 8), 2)) {
        let lsm = |x: &[f64]| {
            let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = x.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
            x.iter().map(|v| v - lse).collect::<Vec<f64>>()
        };
        let (old, new) = (lsm(&raw[0]), lsm(&raw[1]));
        let mut g = Graph::<f64>::new();
        let heads = [0; 4].map(|_| g.input(Tensor::new(&[1, 8], new.clone()).unwrap()));
        let kl = factorized_kl(&mut g, &[old.clone(), old.clone(), old.clone(), old.clone()], &heads).unwrap();
        prop_assert!(g.value(kl).item() >= -1e-12);
    }
}

#[test]
fn normalisation_gives_zero_mean_unit_variance() {
    let x = normalize(&[1.0, 2.0, 3.0, 10.0]);
    let mean = x.iter().sum::<f64>() / 4.0;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-6);
    assert_eq!(normalize(&[2.0, 2.0]), vec![0.0, 0.0]);
}

#[test]
fn clip_arithmetic() {
    assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
    assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    let mut g = Graph::<f64>::new();
    let new = g.input(Tensor::new(&[2], vec![0.5f64.ln(), 1.5f64.ln()]).unwrap());
    let s = ppo_surrogate(&mut g, new, &[0.0, 0.0], &[-1.0, 1.0], 0.2).unwrap();
    let s = g.value(s).data();
    assert!((s[0] + 0.8).abs() < 1e-15 && (s[1] - 1.2).abs() < 1e-15);
}

#[test]
fn identity_ratio_gives_mean_normalised_advantage() {
    let adv = normalize(&[0.3, -1.2, 2.0, 0.1, 0.5]);
    let old = [-1.0, -2.0, -0.5, -3.0, -1.5];
    let mut g = Graph::<f64>::new();
    let new = g.input(Tensor::new(&[5], old.to_vec()).unwrap());
    let ent = g.input(Tensor::new(&[5], vec![0.0; 5]).unwrap());
    let loss = ppo_policy_loss(&mut g, new, ent, &old, &adv, 0.2, 0.01).unwrap();
    assert!(g.value(loss).item().abs() < 1e-12);
}

#[test]
fn value_loss_cases() {
    let t = [0.5, -1.0, 2.0];
    let mut g = Graph::<f64>::new();
    let v = g.input(Tensor::new(&[3], t.to_vec()).unwrap());
    let l = value_loss(&mut g, v, &t).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    let v = g.input(Tensor::new(&[3], t.iter().map(|x| x + 0.3).collect()).unwrap());
    let l = value_loss(&mut g, v, &t).unwrap();
    assert!((g.value(l).item() - 0.5 * 0.09).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pred: Vec<f64> = (0..257).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let targ: Vec<f64> = (0..257).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let mut oracle = 0.0;
    for i in 0..pred.len() {
        oracle += (pred[i] - targ[i]) * (pred[i] - targ[i]);
    }
    oracle = 0.5 * oracle / pred.len() as f64;
    let v = g.input(Tensor::new(&[257], pred).unwrap());
    let l = value_loss(&mut g, v, &targ).unwrap();
    assert!((g.value(l).item() - oracle).abs() < 1e-9);
}

#[test]
fn joint_loss_reduces_to_value_loss_at_the_anchor() {
    let old: [Vec<f64>; 4] = [vec![0.5f64.ln(); 2], vec![0.25f64.ln(); 4], vec![0.0], vec![0.5f64.ln(); 2]];
    let mut g = Graph::<f64>::new();
    let vars: [_; 4] = std::array::from_fn(|h| g.input(Tensor::new(&[1, old[h].len()], old[h].clone()).unwrap()));
    let v = g.input(Tensor::new(&[1], vec![0.7]).unwrap());
    let (lj, kl) = joint_loss(&mut g, v, &[0.2], &old, &vars, 3.0).unwrap();
    assert_eq!(g.value(kl).item(), 0.0);
    assert!((g.value(lj).item() - 0.5 * 0.25).abs() < 1e-12);
}

#[test]
fn collection_shape_episode_boundaries_and_determinism() {
    let c = tiny_config();
    let net = PolicyNet::<f32>::new(c.network, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let collect = || {
        let mut pool = WorkerPool::new(&c.env, Curriculum::new(c.curriculum).unwrap(), 2, 7).unwrap();
        pool.collect(&net, 75, c.gamma, c.gae_lambda).unwrap()
    };
    let (a, b) = (collect(), collect());
    assert_eq!(a.len(), 2 * 75);
    assert_eq!(a.obs.batch, 150);
    assert_eq!((a.actions.clone(), a.rewards.clone(), a.values.clone()), (b.actions, b.rewards, b.values));
    assert_eq!(a.advantages, b.advantages);
    for w in 0..2 {
        let done: Vec<usize> = (0..75).filter(|&t| a.dones[t * 2 + w]).collect();
        assert_eq!(done, vec![29, 59]);
    }
    assert_eq!(a.episodes.len(), 4);
    for i in 0..a.len() {
        assert!((a.returns[i] - a.advantages[i] - a.values[i]).abs() < 1e-12);
    }
}

#[test]
fn default_policy_phase_runs_320_updates() {
    let mut c = tiny_config();
    c.n_minibatches = 32;
    c.n_epochs = 10;
    let mut t = Trainer::new(c.clone()).unwrap();
    let batch = t.pool.collect(&t.net, 32, c.gamma, c.gae_lambda).unwrap();
    let mut updates = 0;
    let stats = policy_phase(&mut t.net, &t.adam, &c, &batch, &mut t.rng, &mut updates, &std::env::temp_dir()).unwrap();
    assert_eq!((stats.updates, updates), (320, 320));
    assert_eq!(TrainConfig::default().n_minibatches * TrainConfig::default().n_epochs, 320);
}

#[test]
fn default_batch_is_32_by_1024() {
    let c = TrainConfig::default();
    assert_eq!(c.batch_size(), 32 * 1024);
    let total = TrainConfig { steps_mode: bridge_learn::StepsMode::Total, ..c };
    assert_eq!(total.batch_size(), 1024);
}

#[test]
fn ppo_and_ppg_configs_differ_only_in_algorithm() {
    let ppg = TrainConfig { algorithm: Algorithm::Ppg, ..TrainConfig::default() };
    let ppo = TrainConfig { algorithm: Algorithm::Ppo, ..TrainConfig::default() };
    let (a, b) = (serde_json::to_value(&ppg).unwrap(), serde_json::to_value(&ppo).unwrap());
    let diff: Vec<&String> = a.as_object().unwrap().keys().filter(|k| a[k.as_str()] != b[k.as_str()]).collect();
    assert_eq!(diff, vec!["algorithm"]);
}

#[test]
fn value_phase_runs_only_for_ppg() {
    for (algorithm, phases) in [(Algorithm::Ppg, 2), (Algorithm::Ppo, 0)] {
        let mut t = Trainer::new(TrainConfig { algorithm, ..tiny_config() }).unwrap();
        let mut seen = 0;
        for _ in 0..4 {
            seen += t.iterate().unwrap().value_phase.is_some() as usize;
        }
        assert_eq!(seen, phases, "{algorithm:?}");
    }
}

#[test]
fn training_is_bit_reproducible() {
    for variant in [ArchVariant::Shared, ArchVariant::Dual] {
        let mut c = tiny_config();
        c.network.variant = variant;
        let run = || {
            let mut t = Trainer::new(c.clone()).unwrap();
            let m: Vec<_> = (0..3).map(|_| t.iterate().unwrap()).collect();
            (t.net.params.to_bytes(), m.iter().map(|m| (m.loss_pi, m.loss_v, m.kl)).collect::<Vec<_>>())
        };
        assert_eq!(run(), run());
    }
}

#[test]
fn value_phase_drift_is_bounded_by_cloning() {
    let mut c = tiny_config();
    c.n_workers = 4;
    c.e_v = 6;
    c.value_minibatches = 8;
    let base = Trainer::new(c.clone()).unwrap();
    let mut pool = base.pool.clone();
    let buffer: Vec<_> = (0..2).map(|_| pool.collect(&base.net, 60, c.gamma, c.gae_lambda).unwrap()).collect();
    let held_out = pool.collect(&base.net, 30, c.gamma, c.gae_lambda).unwrap();
    let (obs, returns) = merge_buffer(&buffer);
    let anchor = policy_log_probs(&base.net, &held_out.obs, 512).unwrap();
    let drift = |beta: f64| {
        let mut net = base.net.clone();
        let cfg = TrainConfig { beta_clone: beta, ..c.clone() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut updates = 0;
        value_phase(&mut net, &base.adam, &cfg, &obs, &returns, &mut rng, &mut updates, &std::env::temp_dir()).unwrap();
        bridge_learn::trainer::mean_kl(&net, &held_out.obs, &anchor).unwrap()
    };
    let (cloned, free) = (drift(3.0), drift(0.0));
    assert!(cloned < 0.05, "KL with cloning {cloned}");
    assert!(cloned < free, "cloning {cloned} vs none {free}");
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let mut t = Trainer::new(tiny_config()).unwrap();
    t.iterate().unwrap();
    let ck = Checkpoint::from_trainer(&t);
    let bytes = ck.to_bytes().unwrap();
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.params.to_bytes(), t.net.params.to_bytes());
    assert_eq!(back.meta.env_steps, t.env_steps);
    assert_eq!(back.meta.config, t.config);

    let resumed = back.into_trainer().unwrap();
    assert_eq!(resumed.net.params.to_bytes(), t.net.params.to_bytes());
    assert_eq!(resumed.pool.curriculum, t.pool.curriculum);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(LearnError::Checkpoint(_))));
    let mut newer = bytes.clone();
    newer[4..6].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&newer), Err(LearnError::UnsupportedVersion { .. })));
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 10]).is_err());
}

#[test]
fn non_finite_loss_aborts_with_a_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny_config()).unwrap();
    t.dump_dir = dir.path().to_path_buf();
    let id = t.net.params.id("pi.y.1.b").unwrap();
    t.net.params.param_mut(id).value.data_mut()[0] = f32::NAN;
    match t.iterate() {
        Err(LearnError::NonFinite { dump, .. }) => {
            let text = std::fs::read_to_string(dump).unwrap();
            assert!(text.contains("\"observations\""));
        }
        other => panic!("expected a non-finite abort, got {:?}", other.map(|m| m.loss_pi)),
    }
}

#[test]
fn hard_evaluation_is_reproducible_and_in_band() {
    let c = TrainConfig::default();
    let net = PolicyNet::<f32>::new(c.network, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let a = eval::evaluate_hard(&net, &c.env, &c.curriculum, 100, 3).unwrap();
    let b = eval::evaluate_hard(&net, &c.env, &c.curriculum, 100, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_tasks, 100);
    assert!(a.widths.iter().all(|&w| w > 0.30 && w <= 0.42));
    assert!(a.success_rate <= 0.05, "untrained policy succeeded on {} of hard tasks", a.success_rate);
    assert_eq!(a.histogram.iter().map(|b| b.tasks).sum::<usize>(), 100);
    assert_eq!(a.blocks_histogram.iter().sum::<usize>(), 100);
}
