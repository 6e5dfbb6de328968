//! Closed-form oracles shared by the core test suites and the acceptance
//! harness: analytically stacked scenes, interval-max heights and the reward
//! computed from them.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use bridge_core::env::RewardConfig;
use bridge_core::physics::{Body, Placement, SceneConfig, SceneState, FIRST_BLOCK};

pub const L: f64 = 0.12;
pub const S: usize = 21;

/// `(y_lo, y_hi, z_lo, z_hi)`.
pub type Rect = (f64, f64, f64, f64);

/// Drops axis-aligned blocks straight down onto whatever is below them and
/// keeps only those whose centre of mass lies strictly inside their support
/// interval, so every kept block is in static equilibrium by construction.
pub fn stacked_scene(width: f64, drops: &[(f64, bool)]) -> (SceneState, Vec<Rect>) {
    let cfg = SceneConfig::default();
    let mut scene = SceneState::new(cfg, width).unwrap();
    let (hl, ht) = (cfg.block_half_length, cfg.block_half_thickness);
    let half = 0.5 * width;
    let statics: Vec<Rect> =
        vec![(-half - cfg.cliff_depth, -half, 0.0, cfg.cliff_height), (half, half + cfg.cliff_depth, 0.0, cfg.cliff_height)];
    let mut blocks: Vec<Rect> = Vec::new();
    for &(frac, upright) in drops {
        if blocks.len() == cfg.n_blocks {
            break;
        }
        let (ey, ez) = if upright { (ht, hl) } else { (hl, ht) };
        let y = -half - L + frac * (width + 2.0 * L);
        let (lo, hi) = (y - ey, y + ey);
        let under = statics.iter().chain(&blocks).filter(|r| r.0 < hi && r.1 > lo);
        let base = under.clone().map(|r| r.3).fold(0.0, f64::max);
        let support = if base == 0.0 {
            Some((lo, hi))
        } else {
            under.filter(|r| r.3 == base).map(|r| (r.0.max(lo), r.1.min(hi))).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
        };
        let Some((s_lo, s_hi)) = support else { continue };
        if !(y > s_lo + 1e-6 && y < s_hi - 1e-6) {
            continue;
        }
        let k = blocks.len();
        let angle = if upright { FRAC_PI_2 } else { 0.0 };
        scene.teleport(FIRST_BLOCK + k, Placement::Pose { y, z: base + ez, angle }).unwrap();
        blocks.push((lo, hi, base, base + 2.0 * ez));
    }
    (scene, blocks)
}

pub struct OracleReward {
    pub heights: Vec<f64>,
    pub r_cons: f64,
    pub r_succ: f64,
    pub r_flat: f64,
    pub r_mat: f64,
    pub total: f64,
}

pub fn oracle_reward(width: f64, blocks: &[Rect], n_blocks: usize, threshold: f64, c: &RewardConfig) -> OracleReward {
    let heights: Vec<f64> = (0..S)
        .map(|i| {
            let y = -width / 2.0 + (i as f64 + 0.5) * width / S as f64;
            blocks.iter().filter(|r| r.0 <= y && y <= r.1).map(|r| r.3).fold(0.0, f64::max)
        })
        .collect();
    let above = heights.iter().filter(|&&h| h > threshold).count();
    let r_cons = above as f64 / S as f64;
    let full = above == S;
    let r_succ = if full { 1.0 } else { 0.0 };
    let mut variation = 0.0;
    for i in 0..S - 1 {
        variation += (heights[i + 1] - heights[i]).abs();
    }
    let used = blocks.iter().filter(|r| {
        let y = 0.5 * (r.0 + r.1);
        -width / 2.0 < y && y < width / 2.0
    });
    let r_flat = if full { (c.flatness_tolerance - variation).max(0.0) } else { 0.0 };
    let r_mat = if full { 1.0 - used.count() as f64 / n_blocks as f64 } else { 0.0 };
    let total = c.c_cons * r_cons + c.c_succ * r_succ + c.c_flat * r_flat + c.c_mat * r_mat;
    OracleReward { heights, r_cons, r_succ, r_flat, r_mat, total }
}

/// Interval-max height of axis-aligned rectangles at `y`, floor included.
pub fn interval_oracle(rects: &[(f64, f64, f64, f64)], y: f64) -> f64 {
    rects.iter().filter(|r| r.0 <= y && y <= r.1).map(|r| r.3).fold(0.0, f64::max)
}

pub fn rect_of(b: &Body) -> (f64, f64, f64, f64) {
    let (lo, hi) = b.obb().aabb();
    (lo.y, hi.y, lo.z, hi.z)
}
