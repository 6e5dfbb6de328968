//! PNG frames. Same layout and colours as the SVG frames, without text.

use bridge_core::env::{compute_heights, probe_positions};
use bridge_core::physics::{BodyKind, SceneState};
use bridge_core::render::{block_color, world_bounds, RenderOptions};
use image::{Rgb, RgbImage};

const BACKGROUND: Rgb<u8> = Rgb([0xfb, 0xfb, 0xf8]);
const OUTLINE: Rgb<u8> = Rgb([0x33, 0x33, 0x33]);

pub fn render_png(scene: &SceneState, opts: &RenderOptions) -> RgbImage {
    let (y0, y1, z0, z1) = world_bounds(scene);
    let s = opts.scale;
    let (w, h) = (((y1 - y0) * s).round().max(1.0) as u32, ((z1 - z0) * s).round().max(1.0) as u32);
    let px = |y: f64, z: f64| ((y - y0) * s, (z1 - z) * s);
    let mut img = RgbImage::from_pixel(w, h, BACKGROUND);
    for body in scene.bodies.iter().filter(|b| !b.state.staged) {
        let fill = match body.def.kind {
            BodyKind::Floor => Rgb([0x8d, 0x8d, 0x84]),
            BodyKind::Cliff => Rgb([0xa0, 0x88, 0x6c]),
            BodyKind::Block => {
                let (r, g, b) = block_color(body.state.angle);
                Rgb([r, g, b])
            }
        };
        let quad = body.obb().vertices().map(|v| px(v.y, v.z));
        fill_convex(&mut img, &quad, fill, OUTLINE);
    }
    let (_, tz) = px(y0, opts.threshold);
    let red = Rgb([0xcc, 0x00, 0x33]);
    if tz >= 0.0 && (tz as u32) < h {
        for x in (0..w).filter(|x| x % 10 < 6) {
            img.put_pixel(x, tz as u32, red);
        }
    }
    let heights = compute_heights(scene, opts.n_probes);
    for (y, hgt) in probe_positions(scene.valley_width, opts.n_probes).into_iter().zip(&heights) {
        let color = if *hgt > opts.threshold { Rgb([0x22, 0xaa, 0x22]) } else { red };
        let (cx, cy) = px(y, *hgt);
        disc(&mut img, cx, cy, 3.0, color);
    }
    img
}

/// Fills a convex polygon by testing pixel centres against every edge; pixels
/// within one pixel of an edge get the outline colour.
fn fill_convex(img: &mut RgbImage, pts: &[(f64, f64)], fill: Rgb<u8>, outline: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let lo_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let hi_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(w as f64) as u32;
    let lo_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let hi_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(h as f64) as u32;
    // Signed area picks the winding so "inside" is a positive distance.
    let area: f64 = (0..pts.len())
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    let sign = if area >= 0.0 { 1.0 } else { -1.0 };
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut min_d = f64::INFINITY;
            for i in 0..pts.len() {
                let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                let (ex, ey) = (b.0 - a.0, b.1 - a.1);
                let len = (ex * ex + ey * ey).sqrt().max(1e-12);
                let d = sign * (ex * (cy - a.1) - ey * (cx - a.0)) / len;
                min_d = min_d.min(d);
            }
            if min_d >= 0.0 {
                img.put_pixel(x, y, if min_d < 1.0 { outline } else { fill });
            }
        }
    }
}

fn disc(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let (lo_x, hi_x) = ((cx - r).floor().max(0.0) as u32, ((cx + r).ceil().max(0.0) as u32).min(w));
    let (lo_y, hi_y) = ((cy - r).floor().max(0.0) as u32, ((cy + r).ceil().max(0.0) as u32).min(h));
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(x, y, color);
            }
        }
    }
}
