//! SVG frames of settled scenes.
//!
//! Each frame shows the floor, both cliffs, active blocks (shaded by how far
//! they are rotated from horizontal), the probe heights, the success height
//! and an annotation line. Frames of successful scenes carry an element with
//! `id="success"`.

use std::fmt::Write;

use crate::env::{compute_heights, is_success, probe_positions, RewardBreakdown};
use crate::physics::{BodyKind, SceneState};
use crate::replay::{Replay, ReplayError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Output pixels per metre.
    pub scale: f64,
    pub n_probes: usize,
    pub threshold: f64,
}

impl RenderOptions {
    pub fn for_replay(replay: &Replay) -> Self {
        Self { scale: 1000.0, n_probes: replay.config.n_probes, threshold: replay.config.success_threshold() }
    }
}

pub struct FrameLabel<'a> {
    pub step: usize,
    pub reward: Option<&'a RewardBreakdown>,
}

/// Visible world window: valley plus cliffs and headroom, in metres.
pub fn world_bounds(scene: &SceneState) -> (f64, f64, f64, f64) {
    let half = scene.half_gap() + scene.config.cliff_depth + 0.02;
    let top = scene.config.cliff_height + 4.0 * scene.config.block_length();
    (-half, half, -0.02, top)
}

/// Fill colour by orientation: blue when lying flat, orange when upright.
pub fn block_color(angle: f64) -> (u8, u8, u8) {
    let t = angle.sin().abs();
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (lerp(70.0, 230.0), lerp(120.0, 140.0), lerp(200.0, 40.0))
}

pub fn render_svg(scene: &SceneState, opts: &RenderOptions, label: &FrameLabel) -> String {
    let (y0, y1, z0, z1) = world_bounds(scene);
    let s = opts.scale;
    let (w, h) = ((y1 - y0) * s, (z1 - z0) * s);
    let px = |y: f64, z: f64| ((y - y0) * s, (z1 - z) * s);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#fbfbf8"/>"##);
    for body in &scene.bodies {
        if body.state.staged {
            continue;
        }
        let pts: Vec<String> = body
            .obb()
            .vertices()
            .iter()
            .map(|v| {
                let (x, y) = px(v.y, v.z);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let (fill, class) = match body.def.kind {
            BodyKind::Floor => ("#8d8d84".to_string(), "floor"),
            BodyKind::Cliff => ("#a0886c".to_string(), "cliff"),
            BodyKind::Block => {
                let (r, g, b) = block_color(body.state.angle);
                (format!("#{r:02x}{g:02x}{b:02x}"), "block")
            }
        };
        let _ = writeln!(
            out,
            r##"<polygon class="{class}" points="{}" fill="{fill}" stroke="#333" stroke-width="1"/>"##,
            pts.join(" ")
        );
    }
    let (ta, tz) = px(y0, opts.threshold);
    let _ = writeln!(
        out,
        r##"<line class="threshold" x1="{ta:.2}" y1="{tz:.2}" x2="{w:.2}" y2="{tz:.2}" stroke="#c03" stroke-dasharray="6 4"/>"##
    );
    let heights = compute_heights(scene, opts.n_probes);
    for (y, hgt) in probe_positions(scene.valley_width, opts.n_probes).into_iter().zip(&heights) {
        let (x, zp) = px(y, *hgt);
        let color = if *hgt > opts.threshold { "#2a2" } else { "#c03" };
        let _ = writeln!(out, r#"<circle class="probe" cx="{x:.2}" cy="{zp:.2}" r="3" fill="{color}"/>"#);
    }
    let mut text = format!("t = {}", label.step);
    if let Some(r) = label.reward {
        let _ = write!(
            text,
            "  reward {:.4} (cons {:.2}, succ {:.0}, flat {:.4}, mat {:.3})",
            r.total, r.r_cons, r.r_succ, r.r_flat, r.r_mat
        );
    }
    let _ = writeln!(out, r#"<text x="10" y="24" font-family="monospace" font-size="16">{text}</text>"#);
    if is_success(&heights, opts.threshold) {
        let _ = writeln!(
            out,
            r##"<text id="success" x="{:.2}" y="24" font-family="monospace" font-size="16" fill="#2a2" text-anchor="end">BRIDGE COMPLETE</text>"##,
            w - 10.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One frame for the initial scene and one per recorded step.
pub fn render_replay(replay: &Replay) -> Result<Vec<String>, ReplayError> {
    let opts = RenderOptions::for_replay(replay);
    (0..replay.n_frames())
        .map(|i| {
            let scene = replay.scene(i)?;
            let reward = i.checked_sub(1).map(|k| &replay.steps[k].reward);
            Ok(render_svg(&scene, &opts, &FrameLabel { step: i, reward }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BridgeEnv, EnvConfig, Instruction, Target};

    #[test]
    fn frame_count_and_success_marker() {
        let mut env = BridgeEnv::new(EnvConfig::default()).unwrap();
        let empty = Replay::record_episode(&mut env, 0, 0.08, &[]).unwrap();
        assert_eq!(render_replay(&empty).unwrap().len(), 1);

        let ins = [
            Instruction { object_id: 0, target: Target::Place { y: 0.0, z: 0.35, angle: 0.0 } },
            Instruction { object_id: 0, target: Target::Reset },
        ];
        let r = Replay::record_episode(&mut env, 0, 0.08, &ins).unwrap();
        let frames = render_replay(&r).unwrap();
        assert_eq!(frames.len(), 3);
        for (k, frame) in frames.iter().enumerate() {
            let success = k > 0 && r.steps[k - 1].success;
            assert_eq!(frame.contains(r#"id="success""#), success);
            assert!(frame.starts_with("<svg"));
        }
        assert!(frames[1].contains(r#"id="success""#));
        assert_eq!(frames[1].matches(r#"class="block""#).count(), 1);
        assert_eq!(frames[2].matches(r#"class="block""#).count(), 0);
    }

    #[test]
    fn upright_blocks_change_colour() {
        assert_eq!(block_color(0.0), (70, 120, 200));
        assert_eq!(block_color(std::f64::consts::FRAC_PI_2), (230, 140, 40));
    }
}
