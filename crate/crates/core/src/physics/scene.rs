use serde::{Deserialize, Serialize};

use super::body::{Body, BodyDef, BodyKind, BodyState};
use super::collide::{collide, Contact, ContactSet};
use super::math::Vec2;
use super::solver::WarmStart;
use super::PhysicsError;

pub const FLOOR: usize = 0;
pub const LEFT_CLIFF: usize = 1;
pub const RIGHT_CLIFF: usize = 2;
/// Index of the first dynamic block; blocks occupy `FIRST_BLOCK..FIRST_BLOCK + N`.
pub const FIRST_BLOCK: usize = 3;

const FLOOR_HALF_LENGTH: f64 = 5.0;
const FLOOR_HALF_THICKNESS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt: f64,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
    pub friction: f64,
    pub restitution: f64,
    /// Allowed penetration before positional correction kicks in.
    pub slop: f64,
    /// Fraction of the remaining penetration removed per position iteration.
    pub correction_factor: f64,
    pub max_correction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 240.0,
            velocity_iterations: 8,
            position_iterations: 3,
            friction: 0.8,
            restitution: 0.0,
            slop: 5e-4,
            correction_factor: 0.2,
            max_correction: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SettleConfig {
    pub linear_threshold: f64,
    pub angular_threshold: f64,
    pub quiet_steps: usize,
    pub max_steps: usize,
    /// A block teleported deeper than this into other bodies is slid clear
    /// before stepping. Without this a block teleported across a gap
    /// narrower than itself, below the cliff tops, is pushed equally hard
    /// from both sides and stays wedged inside the cliffs.
    pub eject_depth: f64,
}

impl Default for SettleConfig {
    fn default() -> Self {
        Self { linear_threshold: 1e-3, angular_threshold: 1e-2, quiet_steps: 10, max_steps: 2000, eject_depth: 2e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub n_blocks: usize,
    pub block_half_length: f64,
    pub block_half_thickness: f64,
    pub block_mass: f64,
    pub cliff_height: f64,
    /// Horizontal extent of each cliff's top face.
    pub cliff_depth: f64,
    pub min_width: f64,
    pub max_width: f64,
    pub gravity: f64,
    pub solver: SolverConfig,
    pub settle: SettleConfig,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let block_length = 0.12;
        Self {
            n_blocks: 7,
            block_half_length: 0.5 * block_length,
            block_half_thickness: 0.025,
            block_mass: 0.2,
            cliff_height: 2.0 * block_length,
            cliff_depth: 2.0 * block_length,
            min_width: 0.5 * block_length,
            max_width: 3.5 * block_length,
            gravity: 9.81,
            solver: SolverConfig::default(),
            settle: SettleConfig::default(),
        }
    }
}

impl SceneConfig {
    pub fn block_length(&self) -> f64 {
        2.0 * self.block_half_length
    }

    pub fn block_thickness(&self) -> f64 {
        2.0 * self.block_half_thickness
    }

    pub fn block_def(&self) -> BodyDef {
        BodyDef {
            kind: BodyKind::Block,
            half_length: self.block_half_length,
            half_thickness: self.block_half_thickness,
            mass: self.block_mass,
            is_static: false,
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let positive = [
            ("block_half_length", self.block_half_length),
            ("block_half_thickness", self.block_half_thickness),
            ("block_mass", self.block_mass),
            ("cliff_height", self.cliff_height),
            ("cliff_depth", self.cliff_depth),
            ("solver.dt", self.solver.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PhysicsError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.min_width > 0.0 && self.min_width <= self.max_width) {
            return Err(PhysicsError::InvalidConfig(format!(
                "width range [{}, {}] is empty",
                self.min_width, self.max_width
            )));
        }
        Ok(())
    }
}

/// Target of a teleport.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    Pose { y: f64, z: f64, angle: f64 },
    Staged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettleReport {
    pub steps: usize,
    /// `false` means `max_steps` ran out before the scene came to rest.
    pub converged: bool,
}

impl SettleReport {
    pub fn jittering(&self) -> bool {
        !self.converged
    }
}

/// Complete simulation state. Cloning yields an independent scene.
#[derive(Clone, Debug)]
pub struct SceneState {
    pub config: SceneConfig,
    pub valley_width: f64,
    pub bodies: Vec<Body>,
    pub step_count: u64,
    pub(crate) warm: WarmStart,
    /// Blocks teleported since the last settle, in teleport order.
    pub(crate) pending: Vec<usize>,
}

impl SceneState {
    pub fn new(config: SceneConfig, valley_width: f64) -> Result<Self, PhysicsError> {
        config.validate()?;
        if !(valley_width >= config.min_width && valley_width <= config.max_width) {
            return Err(PhysicsError::WidthOutOfRange {
                width: valley_width,
                min: config.min_width,
                max: config.max_width,
            });
        }
        let half_gap = 0.5 * valley_width;
        let cliff = |sign: f64| Body {
            def: BodyDef {
                kind: BodyKind::Cliff,
                half_length: 0.5 * config.cliff_depth,
                half_thickness: 0.5 * config.cliff_height,
                mass: 0.0,
                is_static: true,
            },
            state: BodyState {
                position: Vec2::new(sign * (half_gap + 0.5 * config.cliff_depth), 0.5 * config.cliff_height),
                ..Default::default()
            },
        };
        let mut bodies = vec![
            Body {
                def: BodyDef {
                    kind: BodyKind::Floor,
                    half_length: FLOOR_HALF_LENGTH,
                    half_thickness: FLOOR_HALF_THICKNESS,
                    mass: 0.0,
                    is_static: true,
                },
                state: BodyState { position: Vec2::new(0.0, -FLOOR_HALF_THICKNESS), ..Default::default() },
            },
            cliff(-1.0),
            cliff(1.0),
        ];
        let mut scene = Self { config, valley_width, bodies: Vec::new(), step_count: 0, warm: WarmStart::default(), pending: Vec::new() };
        for k in 0..config.n_blocks {
            bodies.push(Body {
                def: config.block_def(),
                state: BodyState { position: scene.staging_position(k), staged: true, ..Default::default() },
            });
        }
        scene.bodies = bodies;
        Ok(scene)
    }

    pub fn n_blocks(&self) -> usize {
        self.bodies.len() - FIRST_BLOCK
    }

    pub fn block(&self, k: usize) -> &Body {
        &self.bodies[FIRST_BLOCK + k]
    }

    pub fn blocks(&self) -> &[Body] {
        &self.bodies[FIRST_BLOCK..]
    }

    pub fn half_gap(&self) -> f64 {
        0.5 * self.valley_width
    }

    /// Minimum height a probe must exceed for the valley to count as bridged.
    pub fn success_height(&self) -> f64 {
        self.config.cliff_height + self.config.block_thickness()
    }

    /// Parking spot for staged block `k`, beyond the right cliff.
    fn staging_position(&self, k: usize) -> Vec2 {
        let c = &self.config;
        let y = self.half_gap() + c.cliff_depth + 0.1 + k as f64 * (c.block_length() + 0.03);
        Vec2::new(y, c.block_half_thickness)
    }

    /// Sets a block's pose exactly and zeroes its velocity. No simulation is run.
    pub fn teleport(&mut self, body_index: usize, placement: Placement) -> Result<(), PhysicsError> {
        match self.bodies.get(body_index) {
            Some(b) if b.def.kind == BodyKind::Block => {}
            _ => return Err(PhysicsError::NotADynamicBlock(body_index)),
        }
        let staging = self.staging_position(body_index - FIRST_BLOCK);
        let state = &mut self.bodies[body_index].state;
        match placement {
            Placement::Pose { y, z, angle } => {
                *state = BodyState {
                    position: Vec2::new(y, z),
                    angle: super::math::normalize_angle(angle),
                    staged: false,
                    ..Default::default()
                };
            }
            Placement::Staged => {
                *state = BodyState { position: staging, staged: true, ..Default::default() };
            }
        }
        self.warm.forget_body(body_index);
        self.pending.retain(|&k| k != body_index);
        if matches!(placement, Placement::Pose { .. }) {
            self.pending.push(body_index);
        }
        Ok(())
    }

    /// Steps until every active block is below the rest thresholds for
    /// `quiet_steps` consecutive steps, or `max_steps` is reached.
    pub fn settle(&mut self) -> SettleReport {
        let cfg = self.config.settle;
        self.warm.clear();
        if !self.bodies.iter().any(|b| b.is_dynamic() && b.is_active()) {
            return SettleReport { steps: 0, converged: true };
        }
        self.eject_pending();
        let mut quiet = 0;
        for steps in 1..=cfg.max_steps {
            self.step(self.config.solver.dt);
            if self.is_quiet() {
                quiet += 1;
                if quiet >= cfg.quiet_steps {
                    return SettleReport { steps, converged: true };
                }
            } else {
                quiet = 0;
            }
        }
        SettleReport { steps: cfg.max_steps, converged: false }
    }

    /// Moves each freshly teleported block that is embedded deeper than the
    /// eject depth by the shortest of three axis slides (up, left, right)
    /// that clears the bounding boxes of every other active body.
    fn eject_pending(&mut self) {
        let limit = self.config.settle.eject_depth;
        for k in std::mem::take(&mut self.pending) {
            let obb = self.bodies[k].obb();
            let others: Vec<usize> = (0..self.bodies.len()).filter(|&j| j != k && self.bodies[j].is_active()).collect();
            let deep = others
                .iter()
                .filter_map(|&j| collide(&self.bodies[j].obb(), &obb))
                .flat_map(|m| m.points)
                .any(|p| p.depth > limit);
            if !deep {
                continue;
            }
            let obstacles: Vec<(Vec2, Vec2)> = others.iter().map(|&j| self.bodies[j].obb().aabb()).collect();
            let (lo, hi) = obb.aabb();
            let best = [Vec2::new(0.0, 1.0), Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)]
                .into_iter()
                .filter_map(|d| clearance_along(lo, hi, d, &obstacles).map(|t| d * t))
                .min_by(|a, b| a.length().total_cmp(&b.length()));
            if let Some(shift) = best {
                self.bodies[k].state.position += shift;
                self.warm.forget_body(k);
            }
        }
    }

    pub fn is_quiet(&self) -> bool {
        let cfg = self.config.settle;
        self.bodies.iter().filter(|b| b.is_dynamic() && b.is_active()).all(|b| {
            b.state.linear_velocity.length() < cfg.linear_threshold
                && b.state.angular_velocity.abs() < cfg.angular_threshold
        })
    }

    /// Height of the highest surface below `y` among active blocks and the floor.
    pub fn raycast_down(&self, y: f64) -> Result<f64, PhysicsError> {
        let half_gap = self.half_gap();
        if !(y > -half_gap && y < half_gap) {
            return Err(PhysicsError::RayOutsideGap { y, half_gap });
        }
        Ok(self
            .bodies
            .iter()
            .filter(|b| b.is_active() && b.def.kind != BodyKind::Cliff)
            .filter_map(|b| b.obb().top_at(y))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Candidate pairs: at least one dynamic body, neither staged, overlapping bounds.
    pub(crate) fn candidate_pairs(&self) -> Vec<(usize, usize)> {
        let boxes: Vec<_> = self.bodies.iter().map(|b| b.obb().aabb()).collect();
        let mut pairs = Vec::new();
        for i in 0..self.bodies.len() {
            let bi = &self.bodies[i];
            if !bi.is_active() {
                continue;
            }
            for j in (i + 1)..self.bodies.len() {
                let bj = &self.bodies[j];
                if !bj.is_active() || (bi.def.is_static && bj.def.is_static) {
                    continue;
                }
                let (lo_i, hi_i) = boxes[i];
                let (lo_j, hi_j) = boxes[j];
                if lo_i.y <= hi_j.y && lo_j.y <= hi_i.y && lo_i.z <= hi_j.z && lo_j.z <= hi_i.z {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// All current penetrating contacts.
    pub fn contacts(&self) -> ContactSet {
        let mut out = Vec::new();
        for (i, j) in self.candidate_pairs() {
            if let Some(m) = collide(&self.bodies[i].obb(), &self.bodies[j].obb()) {
                out.extend(m.points.iter().map(|p| Contact {
                    body_a: i,
                    body_b: j,
                    point: p.point,
                    normal: m.normal,
                    penetration_depth: p.depth,
                }));
            }
        }
        out
    }

    pub fn max_penetration(&self) -> f64 {
        self.contacts().iter().map(|c| c.penetration_depth).fold(0.0, f64::max)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.bodies
            .iter()
            .filter(|b| b.is_dynamic() && b.is_active())
            .map(|b| {
                let v = b.state.linear_velocity;
                0.5 * b.def.mass * v.dot(v) + 0.5 * b.def.inertia() * b.state.angular_velocity.powi(2)
            })
            .sum()
    }

    pub fn potential_energy(&self) -> f64 {
        self.bodies
            .iter()
            .filter(|b| b.is_dynamic() && b.is_active())
            .map(|b| b.def.mass * self.config.gravity * b.state.position.z)
            .sum()
    }
}

/// Distance to slide the box `[lo, hi]` along the unit axis `d` until it
/// overlaps none of `obstacles`; `None` when that never happens.
fn clearance_along(lo: Vec2, hi: Vec2, d: Vec2, obstacles: &[(Vec2, Vec2)]) -> Option<f64> {
    let mut t = 0.0;
    for _ in 0..=obstacles.len() {
        let (l, h) = (lo + d * t, hi + d * t);
        let mut needed: f64 = 0.0;
        for &(sl, sh) in obstacles {
            let overlaps = l.y < sh.y && h.y > sl.y && l.z < sh.z && h.z > sl.z;
            if !overlaps {
                continue;
            }
            let push = if d.z > 0.0 {
                sh.z - l.z
            } else if d.y < 0.0 {
                h.y - sl.y
            } else {
                sh.y - l.y
            };
            needed = needed.max(push);
        }
        if needed == 0.0 {
            return Some(t);
        }
        t += needed;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    const L: f64 = 0.12;

    fn scene(width: f64) -> SceneState {
        SceneState::new(SceneConfig::default(), width).unwrap()
    }

    #[test]
    fn cliffs_are_symmetric_about_origin() {
        for (w, edge) in [(0.5 * L, 0.03), (3.5 * L, 0.21)] {
            let s = scene(w);
            let left = s.bodies[LEFT_CLIFF].obb().aabb();
            let right = s.bodies[RIGHT_CLIFF].obb().aabb();
            assert!((left.1.y + edge).abs() < 1e-12);
            assert!((right.0.y - edge).abs() < 1e-12);
            assert!((left.1.z - 0.24).abs() < 1e-12);
        }
    }

    #[test]
    fn default_scene_has_seven_staged_blocks() {
        let s = scene(0.2);
        assert_eq!(s.bodies.len(), 10);
        assert_eq!(s.n_blocks(), 7);
        assert!(s.blocks().iter().all(|b| b.state.staged && b.is_dynamic()));
        assert_eq!(s.bodies.iter().filter(|b| b.def.is_static).count(), 3);
        assert_eq!(s.bodies[FLOOR].obb().aabb().1.z, 0.0);
    }

    #[test]
    fn width_outside_range_is_rejected() {
        let cfg = SceneConfig::default();
        assert!(matches!(SceneState::new(cfg, 0.05), Err(PhysicsError::WidthOutOfRange { .. })));
        assert!(matches!(SceneState::new(cfg, 0.43), Err(PhysicsError::WidthOutOfRange { .. })));
        assert!(SceneState::new(cfg, 0.42).is_ok());
    }

    #[test]
    fn teleport_sets_pose_and_zero_velocity() {
        let mut s = scene(0.2);
        s.teleport(FIRST_BLOCK, Placement::Pose { y: 0.0, z: 0.4, angle: 0.0 }).unwrap();
        let b = s.block(0);
        assert!(!b.state.staged);
        assert_eq!(b.state.position, Vec2::new(0.0, 0.4));
        assert_eq!(b.state.linear_velocity, Vec2::ZERO);
        assert_eq!(b.state.angular_velocity, 0.0);
    }

    #[test]
    fn teleport_rejects_static_bodies() {
        let mut s = scene(0.2);
        for i in [FLOOR, LEFT_CLIFF, RIGHT_CLIFF, 99] {
            assert_eq!(s.teleport(i, Placement::Staged), Err(PhysicsError::NotADynamicBlock(i)));
        }
    }

    #[test]
    fn staged_block_is_invisible_to_rays() {
        let mut s = scene(0.2);
        s.teleport(FIRST_BLOCK, Placement::Pose { y: 0.0, z: 0.025, angle: 0.0 }).unwrap();
        assert_eq!(s.raycast_down(0.0).unwrap(), 0.05);
        s.teleport(FIRST_BLOCK, Placement::Staged).unwrap();
        assert!(s.block(0).state.staged);
        assert_eq!(s.raycast_down(0.0).unwrap(), 0.0);
    }

    #[test]
    fn raycast_cases() {
        let mut s = scene(0.3);
        assert_eq!(s.raycast_down(0.1).unwrap(), 0.0);
        s.teleport(FIRST_BLOCK, Placement::Pose { y: 0.05, z: 0.265, angle: 0.0 }).unwrap();
        assert_eq!(s.raycast_down(0.05).unwrap(), 0.265 + 0.025);
        assert_eq!(s.raycast_down(-0.1).unwrap(), 0.0);
        s.teleport(FIRST_BLOCK + 1, Placement::Pose { y: -0.1, z: 0.06, angle: FRAC_PI_2 }).unwrap();
        assert_eq!(s.raycast_down(-0.1).unwrap(), 0.12);
        assert!(matches!(s.raycast_down(0.15), Err(PhysicsError::RayOutsideGap { .. })));
        assert!(matches!(s.raycast_down(-0.2), Err(PhysicsError::RayOutsideGap { .. })));
    }

    #[test]
    fn settle_with_nothing_active_is_immediate() {
        let mut s = scene(0.2);
        assert_eq!(s.settle(), SettleReport { steps: 0, converged: true });
    }
}
