//! Deterministic planar rigid-body simulation of rectangular blocks.
//!
//! The scene lives in the `yz` plane: a static floor at `z = 0`, two static
//! cliffs separated by the valley, and `N` dynamic blocks that are either
//! staged (parked out of play) or active. Blocks are moved by teleportation and
//! then stepped until they come to rest.

mod body;
mod collide;
mod math;
mod scene;
mod snapshot;
mod solver;

pub use body::{Body, BodyDef, BodyKind, BodyState, Obb};
pub use collide::{collide, Contact, ContactSet, FeatureId, Manifold, ManifoldPoint};
pub use math::{normalize_angle, Rot, Vec2};
pub use scene::{
    Placement, SceneConfig, SceneState, SettleConfig, SettleReport, SolverConfig, FIRST_BLOCK,
    FLOOR, LEFT_CLIFF, RIGHT_CLIFF,
};

pub use snapshot::{Snapshot, SnapshotError};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("valley width {width} outside configured range [{min}, {max}]")]
    WidthOutOfRange { width: f64, min: f64, max: f64 },
    #[error("body {0} is not a dynamic block")]
    NotADynamicBlock(usize),
    #[error("ray at y = {y} is outside the valley gap (-{half_gap}, {half_gap})")]
    RayOutsideGap { y: f64, half_gap: f64 },
    #[error("invalid scene configuration: {0}")]
    InvalidConfig(String),
}
