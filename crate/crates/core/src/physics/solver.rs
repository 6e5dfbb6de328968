//! Semi-implicit Euler stepping with a sequential-impulse contact solver.
//!
//! Per step: apply gravity to velocities, build contact constraints from the
//! current poses, warm-start them with last step's impulses, run the velocity
//! iterations (Coulomb friction clamped by the accumulated normal impulse),
//! integrate positions, then push remaining penetration out with a few
//! positional correction passes that do not touch velocities.

use super::body::Body;
use super::collide::{collide, FeatureId};
use super::math::{normalize_angle, scalar_cross, Vec2};
use super::scene::SceneState;

#[derive(Clone, Debug, Default)]
pub(crate) struct WarmStart {
    entries: Vec<CachedImpulse>,
}

#[derive(Clone, Copy, Debug)]
struct CachedImpulse {
    a: usize,
    b: usize,
    id: FeatureId,
    normal: f64,
    tangent: f64,
}

impl WarmStart {
    pub(crate) fn clear(&mut self) {
        self.entries.clear();
    }

    pub(crate) fn forget_body(&mut self, body: usize) {
        self.entries.retain(|e| e.a != body && e.b != body);
    }

    fn lookup(&self, a: usize, b: usize, id: FeatureId) -> (f64, f64) {
        self.entries
            .iter()
            .find(|e| e.a == a && e.b == b && e.id == id)
            .map_or((0.0, 0.0), |e| (e.normal, e.tangent))
    }
}

struct PointConstraint {
    ra: Vec2,
    rb: Vec2,
    normal_mass: f64,
    tangent_mass: f64,
    bias: f64,
    normal_impulse: f64,
    tangent_impulse: f64,
    id: FeatureId,
}

struct ContactConstraint {
    a: usize,
    b: usize,
    normal: Vec2,
    points: Vec<PointConstraint>,
}

#[derive(Clone, Copy)]
struct MassProps {
    inv_mass: f64,
    inv_inertia: f64,
}

fn mass_props(b: &Body) -> MassProps {
    if b.state.staged {
        MassProps { inv_mass: 0.0, inv_inertia: 0.0 }
    } else {
        MassProps { inv_mass: b.def.inv_mass(), inv_inertia: b.def.inv_inertia() }
    }
}

// Relative speed below which restitution is ignored.
const RESTITUTION_THRESHOLD: f64 = 0.5;
const MAX_TRANSLATION: f64 = 0.5;
const MAX_ROTATION: f64 = 0.5 * std::f64::consts::PI;

fn apply_impulse(bodies: &mut [Body], props: &[MassProps], a: usize, b: usize, ra: Vec2, rb: Vec2, p: Vec2) {
    let (ma, mb) = (props[a], props[b]);
    let sa = &mut bodies[a].state;
    sa.linear_velocity -= p * ma.inv_mass;
    sa.angular_velocity -= ma.inv_inertia * ra.cross(p);
    let sb = &mut bodies[b].state;
    sb.linear_velocity += p * mb.inv_mass;
    sb.angular_velocity += mb.inv_inertia * rb.cross(p);
}

fn relative_velocity(bodies: &[Body], a: usize, b: usize, ra: Vec2, rb: Vec2) -> Vec2 {
    let sa = &bodies[a].state;
    let sb = &bodies[b].state;
    sb.linear_velocity + scalar_cross(sb.angular_velocity, rb)
        - sa.linear_velocity
        - scalar_cross(sa.angular_velocity, ra)
}

impl SceneState {
    /// Advances the simulation by `dt` seconds.
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0, "time step must be positive, got {dt}");
        let cfg = self.config.solver;
        let gravity = Vec2::new(0.0, -self.config.gravity);
        let props: Vec<MassProps> = self.bodies.iter().map(mass_props).collect();

        for b in self.bodies.iter_mut().filter(|b| b.is_dynamic() && b.is_active()) {
            b.state.linear_velocity += gravity * dt;
        }

        let pairs = self.candidate_pairs();
        let mut constraints = Vec::new();
        for &(a, b) in &pairs {
            let Some(m) = collide(&self.bodies[a].obb(), &self.bodies[b].obb()) else {
                continue;
            };
            let tangent = m.normal.cross_scalar(1.0);
            let (pa, pb) = (props[a], props[b]);
            let ca = self.bodies[a].state.position;
            let cb = self.bodies[b].state.position;
            let points = m
                .points
                .iter()
                .map(|mp| {
                    let ra = mp.point - ca;
                    let rb = mp.point - cb;
                    let k = |dir: Vec2| {
                        let rna = ra.cross(dir);
                        let rnb = rb.cross(dir);
                        pa.inv_mass + pb.inv_mass + pa.inv_inertia * rna * rna + pb.inv_inertia * rnb * rnb
                    };
                    let inv = |k: f64| if k > 0.0 { 1.0 / k } else { 0.0 };
                    let vn = relative_velocity(&self.bodies, a, b, ra, rb).dot(m.normal);
                    let bias = if vn < -RESTITUTION_THRESHOLD { -cfg.restitution * vn } else { 0.0 };
                    let (normal_impulse, tangent_impulse) = self.warm.lookup(a, b, mp.id);
                    PointConstraint {
                        ra,
                        rb,
                        normal_mass: inv(k(m.normal)),
                        tangent_mass: inv(k(tangent)),
                        bias,
                        normal_impulse,
                        tangent_impulse,
                        id: mp.id,
                    }
                })
                .collect();
            constraints.push(ContactConstraint { a, b, normal: m.normal, points });
        }

        for c in &constraints {
            let tangent = c.normal.cross_scalar(1.0);
            for p in &c.points {
                let impulse = c.normal * p.normal_impulse + tangent * p.tangent_impulse;
                apply_impulse(&mut self.bodies, &props, c.a, c.b, p.ra, p.rb, impulse);
            }
        }

        for _ in 0..cfg.velocity_iterations {
            for c in constraints.iter_mut() {
                let tangent = c.normal.cross_scalar(1.0);
                for p in c.points.iter_mut() {
                    let vt = relative_velocity(&self.bodies, c.a, c.b, p.ra, p.rb).dot(tangent);
                    let max_friction = cfg.friction * p.normal_impulse;
                    let new_t = (p.tangent_impulse - p.tangent_mass * vt).clamp(-max_friction, max_friction);
                    let dt_imp = new_t - p.tangent_impulse;
                    p.tangent_impulse = new_t;
                    apply_impulse(&mut self.bodies, &props, c.a, c.b, p.ra, p.rb, tangent * dt_imp);
                }
                for p in c.points.iter_mut() {
                    let vn = relative_velocity(&self.bodies, c.a, c.b, p.ra, p.rb).dot(c.normal);
                    let new_n = (p.normal_impulse - p.normal_mass * (vn - p.bias)).max(0.0);
                    let dn = new_n - p.normal_impulse;
                    p.normal_impulse = new_n;
                    apply_impulse(&mut self.bodies, &props, c.a, c.b, p.ra, p.rb, c.normal * dn);
                }
            }
        }

        for b in self.bodies.iter_mut().filter(|b| b.is_dynamic() && b.is_active()) {
            let s = &mut b.state;
            let mut translation = s.linear_velocity * dt;
            let len = translation.length();
            if len > MAX_TRANSLATION {
                s.linear_velocity = s.linear_velocity * (MAX_TRANSLATION / len);
                translation = translation * (MAX_TRANSLATION / len);
            }
            let mut rotation = s.angular_velocity * dt;
            if rotation.abs() > MAX_ROTATION {
                s.angular_velocity *= MAX_ROTATION / rotation.abs();
                rotation = s.angular_velocity * dt;
            }
            s.position += translation;
            s.angle += rotation;
        }

        for _ in 0..cfg.position_iterations {
            for &(a, b) in &pairs {
                let Some(m) = collide(&self.bodies[a].obb(), &self.bodies[b].obb()) else {
                    continue;
                };
                let (pa, pb) = (props[a], props[b]);
                for mp in &m.points {
                    let c = (cfg.correction_factor * (cfg.slop - mp.depth)).clamp(-cfg.max_correction, 0.0);
                    if c == 0.0 {
                        continue;
                    }
                    let ca = self.bodies[a].state.position;
                    let cb = self.bodies[b].state.position;
                    let ra = mp.point - ca;
                    let rb = mp.point - cb;
                    let rna = ra.cross(m.normal);
                    let rnb = rb.cross(m.normal);
                    let k = pa.inv_mass + pb.inv_mass + pa.inv_inertia * rna * rna + pb.inv_inertia * rnb * rnb;
                    if k <= 0.0 {
                        continue;
                    }
                    let p = m.normal * (-c / k);
                    let sa = &mut self.bodies[a].state;
                    sa.position -= p * pa.inv_mass;
                    sa.angle -= pa.inv_inertia * ra.cross(p);
                    let sb = &mut self.bodies[b].state;
                    sb.position += p * pb.inv_mass;
                    sb.angle += pb.inv_inertia * rb.cross(p);
                }
            }
        }

        for b in self.bodies.iter_mut().filter(|b| b.is_dynamic()) {
            b.state.angle = normalize_angle(b.state.angle);
        }

        self.warm.entries.clear();
        for c in &constraints {
            for p in &c.points {
                self.warm.entries.push(CachedImpulse {
                    a: c.a,
                    b: c.b,
                    id: p.id,
                    normal: p.normal_impulse,
                    tangent: p.tangent_impulse,
                });
            }
        }
        self.step_count += 1;
    }
}
