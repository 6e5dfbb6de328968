//! Versioned binary scene snapshots.
//!
//! Layout (all integers and floats little-endian, fields in this order):
//!
//! | field          | type      |
//! |----------------|-----------|
//! | magic          | `b"BSCN"` |
//! | version        | u16 (= 1) |
//! | reserved       | u16 (= 0) |
//! | valley_width   | f64       |
//! | cliff_height   | f64       |
//! | gravity        | f64       |
//! | step_count     | u64       |
//! | body count     | u32       |
//! | bodies...      | 82 bytes each |
//!
//! Each body record: `kind: u8` (0 floor, 1 cliff, 2 block), `flags: u8`
//! (bit 0 static, bit 1 staged), then `half_length, half_thickness, mass, y,
//! z, angle, vy, vz, angular_velocity` as f64.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use super::body::{Body, BodyDef, BodyKind, BodyState};
use super::math::Vec2;
use super::scene::{SceneConfig, SceneState};
use super::solver::WarmStart;

pub const MAGIC: [u8; 4] = *b"BSCN";
pub const VERSION: u16 = 1;
const BODY_RECORD_LEN: usize = 2 + 9 * 8;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a scene snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown body kind tag {0}")]
    BadKind(u8),
    #[error("truncated snapshot: {0}")]
    Truncated(#[from] std::io::Error),
    #[error("snapshot has {found} blocks, configuration expects {expected}")]
    BlockCountMismatch { found: usize, expected: usize },
}

/// Decoded snapshot contents, independent of solver configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub valley_width: f64,
    pub cliff_height: f64,
    pub gravity: f64,
    pub step_count: u64,
    pub bodies: Vec<Body>,
}

impl Snapshot {
    pub fn of(scene: &SceneState) -> Self {
        Self {
            valley_width: scene.valley_width,
            cliff_height: scene.config.cliff_height,
            gravity: scene.config.gravity,
            step_count: scene.step_count,
            bodies: scene.bodies.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(36 + self.bodies.len() * BODY_RECORD_LEN);
        out.extend_from_slice(&MAGIC);
        // Writes into a Vec cannot fail.
        out.write_u16::<LE>(VERSION).unwrap();
        out.write_u16::<LE>(0).unwrap();
        for v in [self.valley_width, self.cliff_height, self.gravity] {
            out.write_f64::<LE>(v).unwrap();
        }
        out.write_u64::<LE>(self.step_count).unwrap();
        out.write_u32::<LE>(self.bodies.len() as u32).unwrap();
        for b in &self.bodies {
            let kind = match b.def.kind {
                BodyKind::Floor => 0,
                BodyKind::Cliff => 1,
                BodyKind::Block => 2,
            };
            let flags = u8::from(b.def.is_static) | (u8::from(b.state.staged) << 1);
            out.push(kind);
            out.push(flags);
            let s = &b.state;
            for v in [
                b.def.half_length,
                b.def.half_thickness,
                b.def.mass,
                s.position.y,
                s.position.z,
                s.angle,
                s.linear_velocity.y,
                s.linear_velocity.z,
                s.angular_velocity,
            ] {
                out.write_f64::<LE>(v).unwrap();
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = r.read_u16::<LE>()?;
        if version != VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let _reserved = r.read_u16::<LE>()?;
        let valley_width = r.read_f64::<LE>()?;
        let cliff_height = r.read_f64::<LE>()?;
        let gravity = r.read_f64::<LE>()?;
        let step_count = r.read_u64::<LE>()?;
        let n = r.read_u32::<LE>()? as usize;
        let mut bodies = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let kind = match r.read_u8()? {
                0 => BodyKind::Floor,
                1 => BodyKind::Cliff,
                2 => BodyKind::Block,
                k => return Err(SnapshotError::BadKind(k)),
            };
            let flags = r.read_u8()?;
            let mut f = [0.0; 9];
            for v in f.iter_mut() {
                *v = r.read_f64::<LE>()?;
            }
            bodies.push(Body {
                def: BodyDef {
                    kind,
                    half_length: f[0],
                    half_thickness: f[1],
                    mass: f[2],
                    is_static: flags & 1 != 0,
                },
                state: BodyState {
                    position: Vec2::new(f[3], f[4]),
                    angle: f[5],
                    linear_velocity: Vec2::new(f[6], f[7]),
                    angular_velocity: f[8],
                    staged: flags & 2 != 0,
                },
            });
        }
        Ok(Self { valley_width, cliff_height, gravity, step_count, bodies })
    }

    /// Rebuilds a scene under `config`. Warm-start impulses are not stored, so
    /// the restored scene starts with an empty contact cache.
    pub fn into_scene(self, config: SceneConfig) -> Result<SceneState, SnapshotError> {
        let found = self.bodies.iter().filter(|b| b.def.kind == BodyKind::Block).count();
        if found != config.n_blocks {
            return Err(SnapshotError::BlockCountMismatch { found, expected: config.n_blocks });
        }
        Ok(SceneState {
            config,
            valley_width: self.valley_width,
            bodies: self.bodies,
            step_count: self.step_count,
            warm: WarmStart::default(),
            pending: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{Placement, FIRST_BLOCK};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let scene = SceneState::new(SceneConfig::default(), 0.2).unwrap();
        let bytes = Snapshot::of(&scene).encode();
        assert_eq!(&bytes[..4], b"BSCN");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 0.2);
        assert_eq!(bytes.len(), 8 + 3 * 8 + 8 + 4 + 10 * BODY_RECORD_LEN);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Snapshot::decode(b"nope"), Err(SnapshotError::BadMagic)));
        let scene = SceneState::new(SceneConfig::default(), 0.2).unwrap();
        let mut bytes = Snapshot::of(&scene).encode();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(Snapshot::decode(&bytes), Err(SnapshotError::Truncated(_))));
        bytes[4] = 9;
        assert!(matches!(Snapshot::decode(&bytes), Err(SnapshotError::UnsupportedVersion(9))));
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(width in 0.06f64..0.42, y in -0.3f64..0.3, z in 0.0f64..0.5, a in -3.0f64..3.0, steps in 0usize..40) {
            let mut scene = SceneState::new(SceneConfig::default(), width).unwrap();
            scene.teleport(FIRST_BLOCK + 2, Placement::Pose { y, z, angle: a }).unwrap();
            for _ in 0..steps {
                scene.step(1.0 / 240.0);
            }
            let snap = Snapshot::of(&scene);
            let back = Snapshot::decode(&snap.encode()).unwrap();
            prop_assert_eq!(&back, &snap);
            let restored = back.into_scene(scene.config).unwrap();
            prop_assert_eq!(restored.bodies, scene.bodies);
        }
    }
}
