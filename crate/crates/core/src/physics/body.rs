use serde::{Deserialize, Serialize};

use super::math::{Rot, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyKind {
    Floor,
    Cliff,
    Block,
}

/// Static shape and mass properties of a rectangular body.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyDef {
    pub kind: BodyKind,
    /// Half extent along the body's local length axis (world `y` at angle 0).
    pub half_length: f64,
    /// Half extent along the body's local thickness axis (world `z` at angle 0).
    pub half_thickness: f64,
    pub mass: f64,
    pub is_static: bool,
}

impl BodyDef {
    pub fn inv_mass(&self) -> f64 {
        if self.is_static {
            0.0
        } else {
            1.0 / self.mass
        }
    }

    /// Moment of inertia of a solid rectangle about its centre.
    pub fn inertia(&self) -> f64 {
        let w = 2.0 * self.half_length;
        let h = 2.0 * self.half_thickness;
        self.mass * (w * w + h * h) / 12.0
    }

    pub fn inv_inertia(&self) -> f64 {
        if self.is_static {
            0.0
        } else {
            1.0 / self.inertia()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: Vec2,
    /// Rotation about the world `x` axis, kept in `(-π, π]`.
    pub angle: f64,
    pub linear_velocity: Vec2,
    pub angular_velocity: f64,
    /// Parked in the staging area: no gravity, no contacts, invisible to ray casts.
    pub staged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub def: BodyDef,
    pub state: BodyState,
}

impl Body {
    pub fn is_dynamic(&self) -> bool {
        !self.def.is_static
    }

    /// Takes part in contact generation and ray casts.
    pub fn is_active(&self) -> bool {
        !self.state.staged
    }

    pub fn obb(&self) -> Obb {
        Obb {
            center: self.state.position,
            rot: Rot::from_angle(self.state.angle),
            half: Vec2::new(self.def.half_length, self.def.half_thickness),
        }
    }
}

impl Serialize for Vec2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [y, z] = <[f64; 2]>::deserialize(d)?;
        Ok(Vec2::new(y, z))
    }
}

/// Oriented rectangle in world space.
#[derive(Clone, Copy, Debug)]
pub struct Obb {
    pub center: Vec2,
    pub rot: Rot,
    pub half: Vec2,
}

const LOCAL_NORMALS: [Vec2; 4] = [
    Vec2::new(0.0, -1.0),
    Vec2::new(1.0, 0.0),
    Vec2::new(0.0, 1.0),
    Vec2::new(-1.0, 0.0),
];

impl Obb {
    /// Corners in counter-clockwise order, starting bottom-left in local frame.
    pub fn vertices(&self) -> [Vec2; 4] {
        let h = self.half;
        [
            Vec2::new(-h.y, -h.z),
            Vec2::new(h.y, -h.z),
            Vec2::new(h.y, h.z),
            Vec2::new(-h.y, h.z),
        ]
        .map(|v| self.center + self.rot.apply(v))
    }

    /// Outward edge normals; normal `i` belongs to the edge from vertex `i` to `i + 1`.
    pub fn normals(&self) -> [Vec2; 4] {
        LOCAL_NORMALS.map(|n| self.rot.apply(n))
    }

    pub fn aabb(&self) -> (Vec2, Vec2) {
        let ey = self.rot.c.abs() * self.half.y + self.rot.s.abs() * self.half.z;
        let ez = self.rot.s.abs() * self.half.y + self.rot.c.abs() * self.half.z;
        (
            Vec2::new(self.center.y - ey, self.center.z - ez),
            Vec2::new(self.center.y + ey, self.center.z + ez),
        )
    }

    /// Highest `z` where the vertical line at `y` meets the rectangle, if it does.
    pub fn top_at(&self, y: f64) -> Option<f64> {
        let dy = y - self.center.y;
        let (c, s) = (self.rot.c, self.rot.s);
        // local u = s*dz + c*dy, local v = c*dz - s*dy
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (a, b, h) in [(s, c * dy, self.half.y), (c, -s * dy, self.half.z)] {
            if a == 0.0 {
                if b.abs() > h {
                    return None;
                }
                continue;
            }
            let (mut l, mut u) = ((-h - b) / a, (h - b) / a);
            if a < 0.0 {
                std::mem::swap(&mut l, &mut u);
            }
            lo = lo.max(l);
            hi = hi.min(u);
        }
        (lo <= hi).then_some(self.center.z + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn obb(y: f64, z: f64, angle: f64) -> Obb {
        Obb { center: Vec2::new(y, z), rot: Rot::from_angle(angle), half: Vec2::new(0.06, 0.025) }
    }

    #[test]
    fn flat_top_is_exact() {
        let b = obb(0.1, 0.29, 0.0);
        assert_eq!(b.top_at(0.1), Some(0.29 + 0.025));
        assert_eq!(b.top_at(0.159), Some(0.29 + 0.025));
        assert_eq!(b.top_at(0.161), None);
    }

    #[test]
    fn vertical_top_is_exact() {
        let b = obb(0.0, 0.06, FRAC_PI_2);
        assert_eq!(b.top_at(0.02), Some(0.06 + 0.06));
        assert_eq!(b.top_at(0.03), None);
    }

    #[test]
    fn tilted_top_matches_vertices() {
        let b = obb(0.0, 0.1, 0.4);
        let top_vertex = b.vertices().into_iter().max_by(|p, q| p.z.total_cmp(&q.z)).unwrap();
        let h = b.top_at(top_vertex.y).unwrap();
        assert!((h - top_vertex.z).abs() < 1e-12);
    }

    #[test]
    fn normals_are_outward_and_unit() {
        let b = obb(0.3, -0.2, 1.1);
        let v = b.vertices();
        for (i, n) in b.normals().iter().enumerate() {
            assert!((n.length() - 1.0).abs() < 1e-12);
            let mid = (v[i] + v[(i + 1) % 4]) * 0.5;
            assert!((mid - b.center).dot(*n) > 0.0);
        }
    }
}
