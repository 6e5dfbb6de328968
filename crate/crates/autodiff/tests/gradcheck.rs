use bridge_autodiff::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Relative error with a floor so gradients that are essentially zero are
/// compared absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Builds `op` on leaves holding `inputs`, contracts the result with a fixed
/// random weight tensor and compares reverse-mode gradients to central
/// differences. Returns the worst relative error.
fn check(seed: u64, inputs: Vec<Tensor<f64>>, op: impl Fn(&mut Graph<f64>, &[Var]) -> Var) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forward = |inputs: &[Tensor<f64>], weights: Option<&Tensor<f64>>| {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = op(&mut g, &vars);
        let w = match weights {
            Some(w) => w.clone(),
            None => Tensor::zeros(g.shape(out)),
        };
        let wv = g.input(w);
        let prod = g.mul(out, wv).unwrap();
        let loss = g.sum(prod);
        let out_shape = g.shape(out).to_vec();
        (g, vars, loss, out_shape)
    };
    let (_, _, _, out_shape) = forward(&inputs, None);
    let weights = random(&mut rng, &out_shape, -1.0, 1.0);
    let (g, vars, loss, _) = forward(&inputs, Some(&weights));
    let grads = g.gradients(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; t.len()]);
        for j in 0..t.len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= H;
            let (gp, _, lp, _) = forward(&plus, Some(&weights));
            let (gm, _, lm, _) = forward(&minus, Some(&weights));
            let numeric = (gp.value(lp).item() - gm.value(lm).item()) / (2.0 * H);
            worst = worst.max(rel_err(analytic[j], numeric));
        }
    }
    worst
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..4, 1usize..5, 1usize..5, 1usize..5)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn matmul_family((b, m, k, n) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, m, k], -1.0, 1.0);
        let w = random(&mut rng, &[k, n], -1.0, 1.0);
        prop_assert!(check(seed, vec![x.clone(), w], |g, v| g.matmul(v[0], v[1]).unwrap()) < TOL);
        let y = random(&mut rng, &[b, k, n], -1.0, 1.0);
        prop_assert!(check(seed, vec![x.clone(), y], |g, v| g.bmm(v[0], v[1]).unwrap()) < TOL);
        let z = random(&mut rng, &[b, n, k], -1.0, 1.0);
        prop_assert!(check(seed, vec![x, z], |g, v| g.bmm_nt(v[0], v[1]).unwrap()) < TOL);
    }

    #[test]
    fn elementwise_binary((b, m, _, n) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, m, n], -2.0, 2.0);
        let y = random(&mut rng, &[b, m, n], -2.0, 2.0);
        let bias = random(&mut rng, &[n], -1.0, 1.0);
        prop_assert!(check(seed, vec![x.clone(), bias], |g, v| g.add_bias(v[0], v[1]).unwrap()) < TOL);
        prop_assert!(check(seed, vec![x.clone(), y.clone()], |g, v| g.add(v[0], v[1]).unwrap()) < TOL);
        prop_assert!(check(seed, vec![x.clone(), y.clone()], |g, v| g.sub(v[0], v[1]).unwrap()) < TOL);
        prop_assert!(check(seed, vec![x.clone(), y.clone()], |g, v| g.mul(v[0], v[1]).unwrap()) < TOL);
        prop_assert!(check(seed, vec![x, y], |g, v| g.minimum(v[0], v[1]).unwrap()) < TOL);
    }

    #[test]
    fn elementwise_unary((b, m, _, n) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, m, n], -2.0, 2.0);
        let pos = random(&mut rng, &[b, m, n], 0.2, 3.0);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.scale(v[0], -1.7)) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.add_scalar(v[0], 0.3)) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.tanh(v[0])) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.relu(v[0])) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.exp(v[0])) < TOL);
        prop_assert!(check(seed, vec![pos], |g, v| g.log(v[0])) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.square(v[0])) < TOL);
        prop_assert!(check(seed, vec![x], |g, v| g.clamp(v[0], -0.8, 0.9)) < TOL);
    }

    #[test]
    fn normalisers_and_masks((b, m, _, n) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, m, n + 1], -3.0, 3.0);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.softmax(v[0])) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.log_softmax(v[0])) < TOL);
        let mask: Vec<bool> = (0..x.len()).map(|i| i % (n + 1) == 0).collect();
        let err = check(seed, vec![x], move |g, v| {
            let f = g.masked_fill(v[0], &mask, -1e9).unwrap();
            g.softmax(f)
        });
        prop_assert!(err < TOL, "masked softmax error {}", err);
    }

    #[test]
    fn reductions_and_layout((b, m, k, n) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, m, n], -2.0, 2.0);
        let y = random(&mut rng, &[b, m, k], -2.0, 2.0);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.sum(v[0])) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.mean(v[0])) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.sum_last(v[0])) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.mean_rows(v[0]).unwrap()) < TOL);
        prop_assert!(check(seed, vec![x.clone(), y], |g, v| g.concat_last(v[0], v[1]).unwrap()) < TOL);
        let index: Vec<usize> = (0..b * m).map(|_| rng.gen_range(0..n)).collect();
        prop_assert!(check(seed, vec![x.clone()], move |g, v| g.gather_last(v[0], &index).unwrap()) < TOL);
        prop_assert!(check(seed, vec![x.clone()], |g, v| g.transpose(v[0]).unwrap()) < TOL);
        prop_assert!(check(seed, vec![x], move |g, v| g.reshape(v[0], &[b * m * n]).unwrap()) < TOL);
    }

    #[test]
    fn softmax_rows_sum_to_one((b, m, _, n) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let x = g.input(random(&mut rng, &[b, m, n], -30.0, 30.0));
        let p = g.softmax(x);
        for row in g.value(p).data().chunks(n) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn composite_expression() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&mut rng, &[2, 3, 4], -1.0, 1.0);
    let w = random(&mut rng, &[4, 4], -1.0, 1.0);
    let err = check(7, vec![x, w], |g, v| {
        let h = g.matmul(v[0], v[1]).unwrap();
        let h = g.tanh(h);
        let s = g.bmm_nt(h, h).unwrap();
        let p = g.softmax(s);
        let o = g.bmm(p, h).unwrap();
        g.mean_rows(o).unwrap()
    });
    assert!(err < TOL, "{err}");
}

#[test]
fn linear_map_gradient_is_input() {
    let mut params = ParamSet::<f64>::new();
    let w = params.add("w", Tensor::from_f64(&[3], &[0.1, 0.2, 0.3]).unwrap()).unwrap();
    let unused = params.add("unused", Tensor::from_f64(&[2], &[1.0, 1.0]).unwrap()).unwrap();
    let mut g = Graph::new();
    let wv = g.param(&params, w);
    let _ = g.param(&params, unused);
    let x = g.input(Tensor::from_f64(&[3], &[4.0, -5.0, 6.0]).unwrap());
    let p = g.mul(wv, x).unwrap();
    let loss = g.sum(p);
    g.backward(loss, &mut params).unwrap();
    assert_eq!(params.param(w).grad, vec![4.0, -5.0, 6.0]);
    assert_eq!(params.param(unused).grad, vec![0.0, 0.0]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(&[2, 2]));
    assert!(matches!(g.gradients(x), Err(AutodiffError::NonScalarLoss(s)) if s == vec![2, 2]));
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut g = Graph::<f64>::new();
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[4, 5]));
    let msg = g.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    assert!(g.add(a, b).is_err());
    assert!(g.concat_last(a, b).is_err());
}

#[test]
fn softmax_examples() {
    let mut g = Graph::<f64>::new();
    let z = g.input(Tensor::zeros(&[1, 5]));
    let p = g.softmax(z);
    assert!(g.value(p).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    let x = g.input(Tensor::from_f64(&[1, 4], &[1.0, 2.0, 3.0, 4.0]).unwrap());
    let m = g.masked_fill(x, &[true, false, true, false], -1e9).unwrap();
    let p = g.softmax(m);
    let v = g.value(p).data();
    assert_eq!((v[0], v[2]), (0.0, 0.0));
    assert!((v[1] + v[3] - 1.0).abs() < 1e-12);
    // f32 underflows the masked entries to exactly zero as well.
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::from_f64(&[1, 3], &[10.0, 0.0, -10.0]).unwrap());
    let m = g.masked_fill(x, &[false, true, false], -1e9).unwrap();
    let p = g.softmax(m);
    assert_eq!(g.value(p).data()[1], 0.0);
}

#[test]
fn masked_entries_get_zero_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::from_f64(&[1, 3], &[0.5, 1.0, -0.5]).unwrap());
    let m = g.masked_fill(x, &[false, true, false], -1e9).unwrap();
    let lp = g.log_softmax(m);
    let pick = g.gather_last(lp, &[0]).unwrap();
    let loss = g.sum(pick);
    let grads = g.gradients(loss).unwrap();
    assert_eq!(grads.get(x).unwrap()[1], 0.0);
}

#[test]
fn ops_do_not_mutate_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = random(&mut rng, &[2, 3], -1.0, 1.0);
    let mut g = Graph::<f64>::new();
    let x = g.leaf(t.clone());
    let y = g.softmax(x);
    let y = g.tanh(y);
    let _ = g.masked_fill(y, &[true; 6], 0.0).unwrap();
    let _ = g.transpose(x).unwrap();
    assert_eq!(g.value(x), &t);
}

#[test]
fn param_files_round_trip_and_reject_corruption() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ps = ParamSet::<f32>::new();
    let a = ps.add("embed.w", random(&mut rng, &[3, 4], -1.0, 1.0).cast()).unwrap();
    ps.add("embed.b", random(&mut rng, &[4], -1.0, 1.0).cast()).unwrap();
    ps.param_mut(a).grad = vec![0.5; 12];
    Adam::default().step(&mut ps);
    let bytes = ps.to_bytes();
    let back = ParamSet::<f32>::from_bytes(&bytes).unwrap();
    for (p, q) in ps.iter().zip(back.iter()) {
        assert_eq!(p.name, q.name);
        assert_eq!(p.value, q.value);
        assert_eq!(p.first_moment(), q.first_moment());
        assert_eq!(p.second_moment(), q.second_moment());
    }
    assert_eq!(back.step_count(), 1);
    assert!(ParamSet::<f64>::from_bytes(&bytes).is_err(), "dtype mismatch must be detected");
    assert!(ParamSet::<f32>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(ParamSet::<f32>::from_bytes(&bad).is_err());
    assert!(ps.add("embed.b", Tensor::zeros(&[1])).is_err());
}

#[test]
fn adam_runs_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::<f32>::new();
        let w = ps.add("w", random(&mut rng, &[4, 2], -1.0, 1.0).cast()).unwrap();
        for _ in 0..20 {
            let mut g = Graph::new();
            let x = g.input(random(&mut rng, &[3, 4], -1.0, 1.0).cast());
            let wv = g.param(&ps, w);
            let y = g.matmul(x, wv).unwrap();
            let y = g.square(y);
            let loss = g.mean(y);
            g.backward(loss, &mut ps).unwrap();
            Adam::with_lr(1e-2).step(&mut ps);
        }
        ps.to_bytes()
    };
    assert_eq!(run(), run());
}
