//! Moving-object videos (digits and simple shapes) with per-frame anomaly labels.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::glyphs::render_glyph;
use super::FloatImage;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ObjectKind {
    Digit(u8),
    Circle,
    Square,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectKind::Digit(d) => write!(f, "digit{d}"),
            ObjectKind::Circle => f.write_str("circle"),
            ObjectKind::Square => f.write_str("square"),
        }
    }
}

impl FromStr for ObjectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(ObjectKind::Circle),
            "square" => Ok(ObjectKind::Square),
            _ => s
                .strip_prefix("digit")
                .and_then(|d| d.parse::<u8>().ok())
                .filter(|d| *d <= 9)
                .map(ObjectKind::Digit)
                .ok_or_else(|| Error::Invalid(format!("unknown object kind {s:?}"))),
        }
    }
}

impl TryFrom<String> for ObjectKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ObjectKind> for String {
    fn from(k: ObjectKind) -> String {
        k.to_string()
    }
}

impl ObjectKind {
    pub fn digits(ds: &[u8]) -> Vec<ObjectKind> {
        ds.iter().map(|&d| ObjectKind::Digit(d)).collect()
    }

    pub fn all_digits() -> Vec<ObjectKind> {
        (0..10).map(ObjectKind::Digit).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Horizontal,
    Vertical,
    /// Horizontal or vertical, drawn once per video from the seed.
    Either,
}

/// Parameters for one synthetic video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// (height, width)
    pub canvas: (usize, usize),
    pub object_size: usize,
    pub objects: Vec<ObjectKind>,
    /// Pixels per frame.
    pub speed: u32,
    pub direction: Direction,
    pub sequence_length: usize,
    pub seed: u64,
    /// Top-left (x, y) of the object in the first frame; random when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<(i64, i64)>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.speed == 0 {
            return Err(Error::Invalid("speed must be at least 1".into()));
        }
        if self.objects.is_empty() {
            return Err(Error::Invalid("object set is empty".into()));
        }
        if self.object_size == 0 || self.object_size > self.canvas.0 || self.object_size > self.canvas.1 {
            return Err(Error::Invalid(format!(
                "object of size {} does not fit a {}x{} canvas",
                self.object_size, self.canvas.0, self.canvas.1
            )));
        }
        if let Some((x, y)) = self.start {
            let (mx, my) = self.max_position();
            if x < 0 || y < 0 || x > mx || y > my {
                return Err(Error::Invalid(format!("start ({x}, {y}) is off the canvas")));
            }
        }
        Ok(())
    }

    fn max_position(&self) -> (i64, i64) {
        (
            (self.canvas.1 - self.object_size) as i64,
            (self.canvas.0 - self.object_size) as i64,
        )
    }
}

/// Object classes and speeds considered normal; everything else is labeled 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalSet {
    pub objects: Vec<ObjectKind>,
    pub speeds: Vec<u32>,
}

impl NormalSet {
    pub fn is_normal(&self, object: ObjectKind, speed: u32) -> bool {
        self.objects.contains(&object) && self.speeds.contains(&speed)
    }
}

/// A mid-video change of object and/or speed; position and heading carry over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub at_frame: usize,
    #[serde(default)]
    pub objects: Option<Vec<ObjectKind>>,
    #[serde(default)]
    pub speed: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct SyntheticVideo {
    pub frames: Vec<FloatImage>,
    pub labels: Vec<u8>,
    /// Top-left (x, y) per frame.
    pub positions: Vec<(i64, i64)>,
    pub objects: Vec<ObjectKind>,
}

/// Advances one coordinate by `v`, reflecting off `[0, max]`.
pub fn bounce_step(pos: i64, v: i64, max: i64) -> (i64, i64) {
    let mut p = pos + v;
    let mut v = v;
    if max == 0 {
        return (0, v);
    }
    loop {
        if p < 0 {
            p = -p;
            v = -v;
        } else if p > max {
            p = 2 * max - p;
            v = -v;
        } else {
            return (p, v);
        }
    }
}

pub fn generate_moving_objects(spec: &SyntheticSpec, normal: &NormalSet) -> Result<SyntheticVideo> {
    generate_scenario(spec, None, normal)
}

/// Generates `spec.sequence_length` frames, optionally switching object or speed part-way.
pub fn generate_scenario(
    spec: &SyntheticSpec,
    switch: Option<&Switch>,
    normal: &NormalSet,
) -> Result<SyntheticVideo> {
    spec.validate()?;
    if let Some(sw) = switch {
        if sw.speed == Some(0) {
            return Err(Error::Invalid("switch speed must be at least 1".into()));
        }
        if sw.objects.as_ref().is_some_and(|o| o.is_empty()) {
            return Err(Error::Invalid("switch object set is empty".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (max_x, max_y) = spec.max_position();
    let horizontal = match spec.direction {
        Direction::Horizontal => true,
        Direction::Vertical => false,
        Direction::Either => rng.gen_bool(0.5),
    };
    // explicit starts always move in the positive direction
    let sign: i64 = if spec.start.is_none() && rng.gen_bool(0.5) { -1 } else { 1 };
    let start = match spec.start {
        Some(p) => p,
        None => (rng.gen_range(0..=max_x), rng.gen_range(0..=max_y)),
    };
    generate_inner(spec, switch, normal, &mut rng, horizontal, sign, start)
}

fn generate_inner(
    spec: &SyntheticSpec,
    switch: Option<&Switch>,
    normal: &NormalSet,
    rng: &mut ChaCha8Rng,
    horizontal: bool,
    sign: i64,
    start: (i64, i64),
) -> Result<SyntheticVideo> {
    let (h, w) = spec.canvas;
    let size = spec.object_size;
    let (max_x, max_y) = spec.max_position();
    let mut object = *spec.objects.choose(rng).expect("validated non-empty");
    let mut glyph = render_glyph(object, size, rng);
    let mut speed = spec.speed;
    let mut velocity = sign * speed as i64;
    let (mut x, mut y) = start;

    let n = spec.sequence_length;
    let mut video = SyntheticVideo {
        frames: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        positions: Vec::with_capacity(n),
        objects: Vec::with_capacity(n),
    };
    for f in 0..n {
        if let Some(sw) = switch.filter(|sw| sw.at_frame == f) {
            if let Some(objs) = &sw.objects {
                object = *objs.choose(rng).expect("checked non-empty");
                glyph = render_glyph(object, size, rng);
            }
            if let Some(s) = sw.speed {
                speed = s;
                velocity = velocity.signum() * s as i64;
            }
        }
        if f > 0 {
            if horizontal {
                (x, velocity) = bounce_step(x, velocity, max_x);
            } else {
                (y, velocity) = bounce_step(y, velocity, max_y);
            }
        }
        let mut canvas = vec![0.0f64; h * w];
        for gy in 0..size {
            for gx in 0..size {
                let (cy, cx) = (y as usize + gy, x as usize + gx);
                let v = &mut canvas[cy * w + cx];
                *v = v.max(glyph[gy * size + gx]);
            }
        }
        video.frames.push(FloatImage::from_gray(h, w, &canvas));
        video.labels.push(u8::from(!normal.is_normal(object, speed)));
        video.positions.push((x, y));
        video.objects.push(object);
    }
    Ok(video)
}
