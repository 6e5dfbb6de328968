use crate::physics::{SceneState, FIRST_BLOCK, LEFT_CLIFF, RIGHT_CLIFF};

/// Width of one object row: position(3), euler(3), linear velocity(3),
/// angular velocity(3), type indicator, normalised time.
pub const OBS_DIM: usize = 14;
/// Number of leading entries replaced by the reset token for staged blocks.
pub const KINEMATIC_DIM: usize = 12;
pub const TYPE_COLUMN: usize = 12;
pub const TIME_COLUMN: usize = 13;

/// Object-centric state: one row per block (in block order) followed by the
/// left and right cliff. Row-major `(N + 2) × 14`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    rows: usize,
    data: Vec<f64>,
}

impl Observation {
    pub fn from_rows(rows: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * OBS_DIM, "observation data does not match {rows} rows");
        Self { rows, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, OBS_DIM)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * OBS_DIM..(i + 1) * OBS_DIM]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_block_row(&self, i: usize) -> bool {
        self.row(i)[TYPE_COLUMN] == 1.0
    }
}

/// Embeds the planar scene into the 3-D row layout: position `(0, y, z)`,
/// euler `(angle, 0, 0)`, velocity `(0, vy, vz)`, angular velocity `(ω, 0, 0)`.
pub fn encode_observation(scene: &SceneState, t: usize, horizon: usize, reset_token: f64) -> Observation {
    let n = scene.n_blocks();
    let time = t as f64 / horizon as f64;
    let mut data = Vec::with_capacity((n + 2) * OBS_DIM);
    let order = (FIRST_BLOCK..FIRST_BLOCK + n).chain([LEFT_CLIFF, RIGHT_CLIFF]);
    for idx in order {
        let b = &scene.bodies[idx];
        let is_block = !b.def.is_static;
        if is_block && b.state.staged {
            data.extend(std::iter::repeat_n(reset_token, KINEMATIC_DIM));
        } else {
            let s = &b.state;
            data.extend_from_slice(&[
                0.0,
                s.position.y,
                s.position.z,
                s.angle,
                0.0,
                0.0,
                0.0,
                s.linear_velocity.y,
                s.linear_velocity.z,
                s.angular_velocity,
                0.0,
                0.0,
            ]);
        }
        data.push(if is_block { 1.0 } else { 0.0 });
        data.push(time);
    }
    Observation { rows: n + 2, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{Placement, SceneConfig};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn layout_and_masking() {
        let mut scene = SceneState::new(SceneConfig::default(), 0.3).unwrap();
        scene.teleport(FIRST_BLOCK + 1, Placement::Pose { y: 0.1, z: 0.29, angle: FRAC_PI_2 }).unwrap();
        let obs = encode_observation(&scene, 15, 30, -1.0);
        assert_eq!(obs.shape(), (9, 14));
        assert_eq!(&obs.row(1)[..6], &[0.0, 0.1, 0.29, FRAC_PI_2, 0.0, 0.0]);
        assert_eq!(obs.row(1)[TIME_COLUMN], 0.5);
        assert!(obs.row(0)[..KINEMATIC_DIM].iter().all(|&v| v == -1.0));
        assert_eq!(obs.row(0)[TYPE_COLUMN], 1.0);
        for cliff_row in [7, 8] {
            assert_eq!(obs.row(cliff_row)[TYPE_COLUMN], 0.0);
            assert!(!obs.is_block_row(cliff_row));
        }
        assert!((obs.row(7)[1] + 0.27).abs() < 1e-12);
        assert!((obs.row(8)[1] - 0.27).abs() < 1e-12);
    }
}
