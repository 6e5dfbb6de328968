//! Generalised advantage estimation.

/// Advantages for one worker's contiguous stream.
///
/// `dones[t]` marks that the episode ended after step `t`, so neither the
/// next value nor the next advantage leaks across the boundary.
/// `next_value` bootstraps the step after the last one.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], next_value: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "gae inputs must have equal length");
    let mut adv = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let (v_next, a_next) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 == n {
            (next_value, 0.0)
        } else {
            (values[t + 1], carry)
        };
        let delta = rewards[t] + gamma * v_next - values[t];
        carry = delta + gamma * lambda * a_next;
        adv[t] = carry;
    }
    adv
}

/// Zero-mean, unit-variance copy; a constant batch maps to zeros.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    x.iter().map(|v| (v - mean) / (std + 1e-8)).collect()
}
