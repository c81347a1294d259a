//! Photometric distortions for robustness tests: brightness, rain streaks, blur.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FloatImage;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RainLevel {
    #[default]
    None,
    Heavy,
    Torrential,
}

/// Streak parameters for one rain level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RainParams {
    /// Streaks per pixel of canvas area.
    pub density: f64,
    /// Streak length as a fraction of the frame height.
    pub length: f64,
    /// Blend weight towards white along a streak.
    pub intensity: f64,
    /// Mean slant from vertical, in radians.
    pub slant: f64,
}

impl RainLevel {
    pub fn params(self) -> Option<RainParams> {
        match self {
            RainLevel::None => None,
            RainLevel::Heavy => Some(RainParams {
                density: 0.006,
                length: 0.15,
                intensity: 0.55,
                slant: 0.2,
            }),
            RainLevel::Torrential => Some(RainParams {
                density: 0.015,
                length: 0.25,
                intensity: 0.7,
                slant: 0.3,
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RainLevel::None => "none",
            RainLevel::Heavy => "heavy",
            RainLevel::Torrential => "torrential",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    brightness: f64,
    blur_sigma: f64,
    rain: RainLevel,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl DistortionSpec {
    pub const IDENTITY: Self = Self {
        brightness: 1.0,
        blur_sigma: 0.0,
        rain: RainLevel::None,
    };

    pub fn new(brightness: f64, blur_sigma: f64, rain: RainLevel) -> Result<Self> {
        if !(brightness > 0.0 && brightness <= 1.0) {
            return Err(Error::Invalid(format!(
                "brightness must lie in (0, 1], got {brightness}"
            )));
        }
        if !(blur_sigma >= 0.0 && blur_sigma.is_finite()) {
            return Err(Error::Invalid(format!(
                "blur sigma must be finite and >= 0, got {blur_sigma}"
            )));
        }
        Ok(Self {
            brightness,
            blur_sigma,
            rain,
        })
    }

    pub fn brightness(&self) -> f64 {
        self.brightness
    }

    pub fn blur_sigma(&self) -> f64 {
        self.blur_sigma
    }

    pub fn rain(&self) -> RainLevel {
        self.rain
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Brightness, then rain, then blur. Deterministic for a given `seed`.
pub fn distort(frame: &FloatImage, spec: &DistortionSpec, seed: u64) -> FloatImage {
    let mut out = frame.clone();
    if spec.brightness != 1.0 {
        for v in out.data_mut() {
            *v = (*v * spec.brightness).clamp(0.0, 1.0);
        }
    }
    if let Some(params) = spec.rain.params() {
        add_rain(&mut out, &params, seed);
    }
    if spec.blur_sigma > 0.0 {
        out = gaussian_blur(&out, spec.blur_sigma);
    }
    out
}

fn add_rain(img: &mut FloatImage, p: &RainParams, seed: u64) {
    let (h, w) = img.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let streaks = (p.density * (h * w) as f64).round() as usize;
    let mut mask = vec![0.0f64; h * w];
    let base_len = (p.length * h as f64).max(2.0);
    for _ in 0..streaks {
        let len = base_len * rng.gen_range(0.7..1.3);
        let angle = p.slant + rng.gen_range(-0.05..0.05);
        let (dx, dy) = (angle.sin(), angle.cos());
        let x0 = rng.gen_range(-(len * dx)..w as f64);
        let y0 = rng.gen_range(-len * 0.5..h as f64);
        let alpha = p.intensity * rng.gen_range(0.7..1.0);
        let steps = (len * 2.0).ceil() as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64 * len;
            let (x, y) = (x0 + t * dx, y0 + t * dy);
            if x < 0.0 || y < 0.0 {
                continue;
            }
            let (xi, yi) = (x as usize, y as usize);
            if xi < w && yi < h {
                let m = &mut mask[yi * w + xi];
                *m = m.max(alpha);
            }
        }
    }
    let data = img.data_mut();
    for c in 0..FloatImage::CHANNELS {
        for (i, &a) in mask.iter().enumerate() {
            if a > 0.0 {
                let v = &mut data[c * h * w + i];
                *v = (*v + a * (1.0 - *v)).clamp(0.0, 1.0);
            }
        }
    }
}

/// Separable Gaussian blur with clamped edges and a `3σ` radius.
pub fn gaussian_blur(img: &FloatImage, sigma: f64) -> FloatImage {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|k| k / norm).collect();
    let (h, w) = img.size();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let src = img.data();
    let mut tmp = vec![0.0; src.len()];
    let mut out = FloatImage::new(h, w);
    for c in 0..FloatImage::CHANNELS {
        let plane = c * h * w;
        for y in 0..h {
            for x in 0..w {
                tmp[plane + y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(j, k)| k * src[plane + y * w + clamp(x as isize + j as isize - radius, w)])
                    .sum();
            }
        }
        let dst = out.data_mut();
        for y in 0..h {
            for x in 0..w {
                dst[plane + y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(j, k)| k * tmp[plane + clamp(y as isize + j as isize - radius, h) * w + x])
                    .sum::<f64>()
                    .clamp(0.0, 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert, prop_oneof, proptest, Just};

    fn noise(seed: u64, h: usize, w: usize) -> FloatImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = FloatImage::new(h, w);
        f.data_mut().iter_mut().for_each(|v| *v = rng.gen());
        f
    }

    #[test]
    fn identity_spec_is_noop() {
        let f = noise(1, 9, 11);
        assert_eq!(distort(&f, &DistortionSpec::IDENTITY, 7), f);
    }

    #[test]
    fn half_brightness_on_white() {
        let spec = DistortionSpec::new(0.5, 0.0, RainLevel::None).unwrap();
        let out = distort(&FloatImage::filled(4, 4, 1.0), &spec, 0);
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn rain_is_deterministic_per_seed() {
        let spec = DistortionSpec::new(1.0, 0.0, RainLevel::Heavy).unwrap();
        let f = noise(2, 32, 32);
        let a = distort(&f, &spec, 99);
        let b = distort(&f, &spec, 99);
        assert_eq!(a.data(), b.data());
        assert_ne!(a, f);
        assert_ne!(distort(&f, &spec, 100), a);
    }

    #[test]
    fn torrential_rain_covers_more_than_heavy() {
        let black = FloatImage::new(64, 64);
        let coverage = |level| {
            let spec = DistortionSpec::new(1.0, 0.0, level).unwrap();
            distort(&black, &spec, 5).data().iter().filter(|&&v| v > 0.0).count()
        };
        assert!(coverage(RainLevel::Torrential) > coverage(RainLevel::Heavy));
        assert!(coverage(RainLevel::Heavy) > 0);
    }

    #[test]
    fn blur_preserves_constant_images_and_smooths_impulses() {
        let flat = FloatImage::filled(8, 8, 0.3);
        let b = gaussian_blur(&flat, 1.5);
        assert!(b.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
        let mut imp = FloatImage::new(9, 9);
        for c in 0..3 {
            imp.data_mut()[c * 81 + 40] = 1.0;
        }
        let b = gaussian_blur(&imp, 1.0);
        assert!(b.get(0, 4, 4) < 1.0 && b.get(0, 4, 5) > 0.0);
        let total: f64 = b.data()[..81].iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DistortionSpec::new(0.0, 0.0, RainLevel::None).is_err());
        assert!(DistortionSpec::new(1.2, 0.0, RainLevel::None).is_err());
        assert!(DistortionSpec::new(0.5, -1.0, RainLevel::None).is_err());
    }

    proptest! {
        #[test]
        fn outputs_stay_in_unit_range(
            b in 0.05f64..=1.0,
            sigma in 0.0f64..2.0,
            rain in prop_oneof![Just(RainLevel::None), Just(RainLevel::Heavy), Just(RainLevel::Torrential)],
            seed in any::<u64>(),
        ) {
            let spec = DistortionSpec::new(b, sigma, rain).unwrap();
            let out = distort(&noise(seed, 12, 10), &spec, seed);
            prop_assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
