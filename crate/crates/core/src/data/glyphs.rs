//! Procedural stroke glyphs for digits and simple shapes.
//!
//! Each instance gets its own slant, scale, stroke width and control-point
//! jitter so that a class is a distribution of shapes rather than one bitmap.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::synthetic::ObjectKind;

type Pt = (f64, f64);

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Vec<Pt> {
    let steps = (((to_deg - from_deg).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64) * PI / 180.0;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn chain(parts: &[Vec<Pt>]) -> Vec<Pt> {
    parts.iter().flatten().copied().collect()
}

/// Polylines in the unit square (x right, y down).
fn strokes(kind: ObjectKind) -> Vec<Vec<Pt>> {
    match kind {
        ObjectKind::Digit(0) => vec![arc(0.5, 0.5, 0.3, 0.42, 0.0, 360.0)],
        ObjectKind::Digit(1) => vec![vec![(0.32, 0.25), (0.52, 0.08), (0.52, 0.92)]],
        ObjectKind::Digit(2) => vec![chain(&[
            arc(0.5, 0.32, 0.28, 0.24, 190.0, 380.0),
            vec![(0.22, 0.92), (0.8, 0.92)],
        ])],
        ObjectKind::Digit(3) => vec![
            arc(0.47, 0.3, 0.27, 0.22, 200.0, 450.0),
            arc(0.47, 0.7, 0.3, 0.22, 270.0, 520.0),
        ],
        ObjectKind::Digit(4) => vec![vec![(0.65, 0.92), (0.65, 0.08), (0.18, 0.65), (0.84, 0.65)]],
        ObjectKind::Digit(5) => vec![chain(&[
            vec![(0.76, 0.08), (0.3, 0.08), (0.27, 0.46)],
            arc(0.5, 0.66, 0.28, 0.26, 235.0, 510.0),
        ])],
        ObjectKind::Digit(6) => vec![
            vec![(0.72, 0.1), (0.46, 0.2), (0.3, 0.42), (0.25, 0.68)],
            arc(0.5, 0.68, 0.25, 0.24, 0.0, 360.0),
        ],
        ObjectKind::Digit(7) => vec![vec![(0.18, 0.08), (0.82, 0.08), (0.4, 0.92)]],
        ObjectKind::Digit(8) => vec![
            arc(0.5, 0.29, 0.22, 0.2, 0.0, 360.0),
            arc(0.5, 0.7, 0.27, 0.22, 0.0, 360.0),
        ],
        ObjectKind::Digit(_) => vec![
            arc(0.5, 0.32, 0.25, 0.24, 0.0, 360.0),
            vec![(0.75, 0.32), (0.7, 0.92)],
        ],
        ObjectKind::Circle => vec![arc(0.5, 0.5, 0.4, 0.4, 0.0, 360.0)],
        ObjectKind::Square => vec![vec![
            (0.14, 0.14),
            (0.86, 0.14),
            (0.86, 0.86),
            (0.14, 0.86),
            (0.14, 0.14),
        ]],
    }
}

fn seg_dist(p: Pt, a: Pt, b: Pt) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Renders one randomized instance of `kind` as a `size × size` intensity mask in `[0, 1]`.
pub fn render_glyph<R: Rng>(kind: ObjectKind, size: usize, rng: &mut R) -> Vec<f64> {
    let shear: f64 = rng.gen_range(-0.15..0.15);
    let scale: f64 = rng.gen_range(0.85..1.0);
    let width: f64 = rng.gen_range(0.08..0.12);
    let mut jitter = || 0.02 * rng.sample::<f64, _>(StandardNormal);
    let polylines: Vec<Vec<Pt>> = strokes(kind)
        .into_iter()
        .map(|line| {
            let (jx, jy) = (jitter(), jitter());
            line.into_iter()
                .map(|(x, y)| {
                    let x = x + shear * (y - 0.5) + jx + 0.3 * jitter();
                    let y = y + jy + 0.3 * jitter();
                    (0.5 + scale * (x - 0.5), 0.5 + scale * (y - 0.5))
                })
                .collect()
        })
        .collect();
    let pixel = 1.0 / size as f64;
    let half = width / 2.0;
    let mut mask = vec![0.0; size * size];
    for yi in 0..size {
        for xi in 0..size {
            let p = ((xi as f64 + 0.5) * pixel, (yi as f64 + 0.5) * pixel);
            let d = polylines
                .iter()
                .flat_map(|l| l.windows(2).map(move |s| seg_dist(p, s[0], s[1])))
                .fold(f64::INFINITY, f64::min);
            mask[yi * size + xi] = ((half - d) / pixel + 0.5).clamp(0.0, 1.0);
        }
    }
    mask
}
