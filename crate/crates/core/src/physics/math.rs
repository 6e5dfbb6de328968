use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A vector in the construction plane. `y` runs across the valley, `z` is up.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub y: f64,
    pub z: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { y: 0.0, z: 0.0 };

    pub const fn new(y: f64, z: f64) -> Self {
        Self { y, z }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.y * o.y + self.z * o.z
    }

    /// Scalar 2-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.y * o.z - self.z * o.y
    }

    /// `self × s`, the clockwise perpendicular scaled by `s`.
    pub fn cross_scalar(self, s: f64) -> Vec2 {
        Vec2::new(s * self.z, -s * self.y)
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec2 {
        let len = self.length();
        if len > 0.0 {
            self * (1.0 / len)
        } else {
            self
        }
    }
}

/// `s × v` for an angular rate `s`.
pub fn scalar_cross(s: f64, v: Vec2) -> Vec2 {
    Vec2::new(-s * v.z, s * v.y)
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.y * s, self.z * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.y, -self.z)
    }
}

/// Rotation stored as cosine/sine.
///
/// Components within `1e-12` of zero are snapped to exactly zero, so blocks at
/// multiples of a right angle have exactly axis-aligned geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rot {
    pub c: f64,
    pub s: f64,
}

const SNAP: f64 = 1e-12;

impl Rot {
    pub fn from_angle(angle: f64) -> Self {
        let (mut s, mut c) = angle.sin_cos();
        if s.abs() < SNAP {
            s = 0.0;
            c = c.signum();
        } else if c.abs() < SNAP {
            c = 0.0;
            s = s.signum();
        }
        Self { c, s }
    }

    /// Local to world.
    pub fn apply(self, v: Vec2) -> Vec2 {
        Vec2::new(self.c * v.y - self.s * v.z, self.s * v.y + self.c * v.z)
    }

    /// World to local.
    pub fn apply_inv(self, v: Vec2) -> Vec2 {
        Vec2::new(self.c * v.y + self.s * v.z, -self.s * v.y + self.c * v.z)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let two_pi = 2.0 * PI;
    let mut r = a - two_pi * ((a + PI) / two_pi).floor();
    if r <= -PI {
        r += two_pi;
    }
    if r > PI {
        r -= two_pi;
    }
    r
}
