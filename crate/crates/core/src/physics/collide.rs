//! Box-versus-box contact generation.
//!
//! Separating-axis test over the four edge normals of both rectangles, then
//! the incident edge is clipped against the side planes of the reference
//! face. Produces at most two penetrating points per pair.

use super::body::Obb;
use super::math::Vec2;

/// Identifies a contact point across steps so impulses can be warm-started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureId {
    pub flipped: bool,
    pub reference_edge: u8,
    pub incident_edge: u8,
    pub vertex: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifoldPoint {
    /// World contact point, midway between the two surfaces.
    pub point: Vec2,
    pub depth: f64,
    pub id: FeatureId,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifold {
    /// Unit normal pointing from the first body towards the second.
    pub normal: Vec2,
    pub points: Vec<ManifoldPoint>,
}

/// A single contact between bodies `body_a` and `body_b` (scene indices).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    pub body_a: usize,
    pub body_b: usize,
    pub point: Vec2,
    pub normal: Vec2,
    pub penetration_depth: f64,
}

pub type ContactSet = Vec<Contact>;

// Bias towards the first body as reference face so the choice does not flicker.
const REFERENCE_TOLERANCE: f64 = 5e-5;

fn max_separation(a: &Obb, b: &Obb) -> (usize, f64) {
    let va = a.vertices();
    let na = a.normals();
    let vb = b.vertices();
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..4 {
        let s = vb
            .iter()
            .map(|v| na[i].dot(*v - va[i]))
            .fold(f64::INFINITY, f64::min);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

#[derive(Clone, Copy)]
struct ClipVertex {
    v: Vec2,
    feature: u8,
}

/// Keeps the part of segment `input` with `normal·v - offset <= 0`.
fn clip_segment(input: [ClipVertex; 2], normal: Vec2, offset: f64, side: u8) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(2);
    let d0 = normal.dot(input[0].v) - offset;
    let d1 = normal.dot(input[1].v) - offset;
    if d0 <= 0.0 {
        out.push(input[0]);
    }
    if d1 <= 0.0 {
        out.push(input[1]);
    }
    if d0 * d1 < 0.0 {
        let t = d0 / (d0 - d1);
        out.push(ClipVertex { v: input[0].v + (input[1].v - input[0].v) * t, feature: 2 + side });
    }
    out
}

/// Contact manifold between two rectangles, or `None` if they are separated.
pub fn collide(a: &Obb, b: &Obb) -> Option<Manifold> {
    let (edge_a, sep_a) = max_separation(a, b);
    if sep_a > 0.0 {
        return None;
    }
    let (edge_b, sep_b) = max_separation(b, a);
    if sep_b > 0.0 {
        return None;
    }

    let (reference, incident, ref_edge, flipped) = if sep_b > sep_a + REFERENCE_TOLERANCE {
        (b, a, edge_b, true)
    } else {
        (a, b, edge_a, false)
    };

    let ref_normals = reference.normals();
    let ref_verts = reference.vertices();
    let ref_normal = ref_normals[ref_edge];

    let inc_normals = incident.normals();
    let inc_verts = incident.vertices();
    let mut inc_edge = 0;
    let mut min_dot = f64::INFINITY;
    for (i, n) in inc_normals.iter().enumerate() {
        let d = ref_normal.dot(*n);
        if d < min_dot {
            min_dot = d;
            inc_edge = i;
        }
    }
    let incident_seg = [
        ClipVertex { v: inc_verts[inc_edge], feature: 0 },
        ClipVertex { v: inc_verts[(inc_edge + 1) % 4], feature: 1 },
    ];

    let v1 = ref_verts[ref_edge];
    let v2 = ref_verts[(ref_edge + 1) % 4];
    let tangent = (v2 - v1).normalized();

    let clipped = clip_segment(incident_seg, -tangent, -tangent.dot(v1), 0);
    if clipped.len() < 2 {
        return None;
    }
    let clipped = clip_segment([clipped[0], clipped[1]], tangent, tangent.dot(v2), 1);
    if clipped.len() < 2 {
        return None;
    }

    let front = ref_normal.dot(v1);
    let mut points = Vec::with_capacity(2);
    for cv in clipped.iter().take(2) {
        let separation = ref_normal.dot(cv.v) - front;
        if separation <= 0.0 {
            points.push(ManifoldPoint {
                point: cv.v - ref_normal * (0.5 * separation),
                depth: -separation,
                id: FeatureId {
                    flipped,
                    reference_edge: ref_edge as u8,
                    incident_edge: inc_edge as u8,
                    vertex: cv.feature,
                },
            });
        }
    }
    if points.is_empty() {
        return None;
    }
    let normal = if flipped { -ref_normal } else { ref_normal };
    Some(Manifold { normal, points })
}
