use serde::{Deserialize, Serialize};

use crate::physics::{BodyKind, SceneState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub c_cons: f64,
    pub c_succ: f64,
    pub c_flat: f64,
    pub c_mat: f64,
    /// Total surface variation tolerated before the flatness reward hits zero.
    pub flatness_tolerance: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { c_cons: 0.05, c_succ: 0.1, c_flat: 1.5, c_mat: 0.1, flatness_tolerance: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_cons: f64,
    pub r_succ: f64,
    pub r_flat: f64,
    pub r_mat: f64,
    pub total: f64,
}

/// Probe positions evenly spaced across the gap, inset half a spacing from
/// each cliff edge.
pub fn probe_positions(valley_width: f64, n_probes: usize) -> Vec<f64> {
    let spacing = valley_width / n_probes as f64;
    (0..n_probes).map(|i| -0.5 * valley_width + (i as f64 + 0.5) * spacing).collect()
}

pub fn compute_heights(scene: &SceneState, n_probes: usize) -> Vec<f64> {
    probe_positions(scene.valley_width, n_probes)
        .into_iter()
        .map(|y| scene.raycast_down(y).expect("probes lie strictly inside the gap"))
        .collect()
}

/// Active blocks whose centre lies strictly between the inner cliff edges.
pub fn blocks_in_valley(scene: &SceneState) -> usize {
    let half = scene.half_gap();
    scene
        .bodies
        .iter()
        .filter(|b| b.def.kind == BodyKind::Block && !b.state.staged)
        .filter(|b| b.state.position.y > -half && b.state.position.y < half)
        .count()
}

pub fn is_success(heights: &[f64], threshold: f64) -> bool {
    heights.iter().all(|&h| h > threshold)
}

pub fn compute_reward(
    heights: &[f64],
    threshold: f64,
    used_blocks: usize,
    n_blocks: usize,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let above = heights.iter().filter(|&&h| h > threshold).count();
    let complete = above == heights.len();
    let r_cons = above as f64 / heights.len() as f64;
    let r_succ = if complete { 1.0 } else { 0.0 };
    let (r_flat, r_mat) = if complete {
        let variation: f64 = heights.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        (
            (cfg.flatness_tolerance - variation).max(0.0),
            1.0 - used_blocks as f64 / n_blocks as f64,
        )
    } else {
        (0.0, 0.0)
    };
    let total = cfg.c_cons * r_cons + cfg.c_succ * r_succ + cfg.c_flat * r_flat + cfg.c_mat * r_mat;
    RewardBreakdown { r_cons, r_succ, r_flat, r_mat, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 0.29;

    #[test]
    fn partial_construction() {
        let mut h = vec![0.0; 10];
        for v in h.iter_mut().take(7) {
            *v = 0.3;
        }
        let r = compute_reward(&h, H, 2, 7, &RewardConfig::default());
        assert!((r.r_cons - 0.7).abs() < 1e-12);
        assert_eq!((r.r_succ, r.r_flat, r.r_mat), (0.0, 0.0, 0.0));
    }

    #[test]
    fn flat_success_with_three_blocks() {
        let h = vec![0.31; 21];
        let r = compute_reward(&h, H, 3, 7, &RewardConfig::default());
        let expected = 0.05 + 0.1 + 1.5 * 0.1 + 0.1 * (4.0 / 7.0);
        assert!((r.total - expected).abs() < 1e-12);
        assert!((r.total - 0.3571).abs() < 1e-4);
    }

    #[test]
    fn one_low_probe_disables_flat_and_material_terms() {
        let mut h = vec![0.31; 10];
        h[4] = 0.1;
        let r = compute_reward(&h, H, 1, 7, &RewardConfig::default());
        assert!((r.r_cons - 0.9).abs() < 1e-12);
        assert_eq!((r.r_succ, r.r_flat, r.r_mat), (0.0, 0.0, 0.0));
    }

    #[test]
    fn success_is_strict() {
        assert!(!is_success(&[H; 5], H));
        assert!(is_success(&[H + 0.001; 5], H));
        assert!(!is_success(&[H + 0.001, 0.0, H + 0.001], H));
    }

    #[test]
    fn flatness_is_clamped_at_zero() {
        let h = [0.3, 0.5, 0.3, 0.5];
        let r = compute_reward(&h, H, 4, 7, &RewardConfig::default());
        assert_eq!(r.r_flat, 0.0);
        assert_eq!(r.r_succ, 1.0);
    }

    #[test]
    fn probes_are_inset_and_even() {
        let p = probe_positions(0.21, 21);
        assert!((p[0] + 0.1).abs() < 1e-12);
        assert!((p[20] - 0.1).abs() < 1e-12);
        assert!((p[10]).abs() < 1e-12);
    }
}
