//! Frame representations, background modelling and preprocessing.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// An RGB image with values in `[0, 1]`, stored planar as `[3, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pixels: Tensor,
}

impl FloatImage {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize) -> Self {
        Self {
            pixels: Tensor::zeros(&[Self::CHANNELS, height, width]),
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            pixels: Tensor::full(&[Self::CHANNELS, height, width], value),
        }
    }

    pub fn from_tensor(pixels: Tensor) -> Result<Self> {
        let s = pixels.shape();
        if s.len() != 3 || s[0] != Self::CHANNELS {
            return Err(Error::shape(&[Self::CHANNELS, 0, 0], s));
        }
        Ok(Self { pixels })
    }

    /// Replicates a single-channel `height × width` plane into all three channels.
    pub fn from_gray(height: usize, width: usize, gray: &[f64]) -> Self {
        assert_eq!(gray.len(), height * width);
        let mut data = Vec::with_capacity(3 * gray.len());
        for _ in 0..Self::CHANNELS {
            data.extend_from_slice(gray);
        }
        Self {
            pixels: Tensor::from_vec(&[Self::CHANNELS, height, width], data),
        }
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Self::new(h, w);
        let data = out.pixels.data_mut();
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = p.0[c] as f64 / 255.0;
            }
        }
        out
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let (h, w) = (self.height(), self.width());
        let data = self.pixels.data();
        image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let px = |c: usize| {
                let v = data[(c * h + y as usize) * w + x as usize];
                (v.clamp(0.0, 1.0) * 255.0).round() as u8
            };
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    pub fn tensor(&self) -> &Tensor {
        &self.pixels
    }

    pub fn data(&self) -> &[f64] {
        self.pixels.data()
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        self.pixels.data_mut()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.pixels.data()[(c * self.height() + y) * self.width() + x]
    }

    /// Bilinear resize with half-pixel centres (no corner alignment).
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        let (h, w) = self.size();
        if (h, w) == (height, width) {
            return self.clone();
        }
        let sy = h as f64 / height as f64;
        let sx = w as f64 / width as f64;
        let taps = |out: usize, scale: f64, len: usize| -> (usize, usize, f64) {
            let src = ((out as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        };
        let mut out = Self::new(height, width);
        let src = self.pixels.data();
        let dst = out.pixels.data_mut();
        for y in 0..height {
            let (y0, y1, fy) = taps(y, sy, h);
            for x in 0..width {
                let (x0, x1, fx) = taps(x, sx, w);
                for c in 0..Self::CHANNELS {
                    let p = |yy: usize, xx: usize| src[(c * h + yy) * w + xx];
                    let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                    let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                    dst[(c * height + y) * width + x] = top * (1.0 - fy) + bottom * fy;
                }
            }
        }
        out
    }
}

/// One preprocessed (resized, background-subtracted) frame with values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTensor {
    /// `[3, H, W]`.
    pub pixels: Tensor,
    pub frame_index: usize,
    pub video_id: Arc<str>,
}

impl FrameTensor {
    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}

/// Per-pixel mean RGB frame of the training data.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundModel {
    pub mean_frame: FloatImage,
    pub frame_count: usize,
}

/// Single-pass accumulator for [`BackgroundModel`].
#[derive(Clone, Debug, Default)]
pub struct BackgroundAccumulator {
    sum: Option<(usize, usize, Vec<f64>)>,
    count: usize,
}

impl BackgroundAccumulator {
    pub fn push(&mut self, frame: &FloatImage) -> Result<()> {
        let (h, w) = frame.size();
        match &mut self.sum {
            None => self.sum = Some((h, w, frame.data().to_vec())),
            Some((sh, sw, acc)) => {
                if (*sh, *sw) != (h, w) {
                    return Err(Error::shape(&[3, *sh, *sw], &[3, h, w]));
                }
                acc.iter_mut().zip(frame.data()).for_each(|(a, v)| *a += v);
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<BackgroundModel> {
        let (h, w, sum) = self.sum.ok_or(Error::NoTrainingFrames)?;
        let n = self.count as f64;
        let mean = sum.into_iter().map(|s| (s / n).clamp(0.0, 1.0)).collect();
        Ok(BackgroundModel {
            mean_frame: FloatImage::from_tensor(Tensor::from_vec(&[3, h, w], mean))?,
            frame_count: self.count,
        })
    }
}

/// Exact per-pixel mean over all training frames.
pub fn compute_background<'a, I>(frames: I) -> Result<BackgroundModel>
where
    I: IntoIterator<Item = &'a FloatImage>,
{
    let mut acc = BackgroundAccumulator::default();
    for f in frames {
        acc.push(f)?;
    }
    acc.finish()
}

impl BackgroundModel {
    /// A zero background, for data that needs no subtraction.
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            mean_frame: FloatImage::new(height, width),
            frame_count: 1,
        }
    }

    pub fn size(&self) -> (usize, usize) {
        self.mean_frame.size()
    }
}

/// Resizes `raw` to `target` (height, width), subtracts the background and tags the frame.
pub fn preprocess(
    raw: &FloatImage,
    bg: &BackgroundModel,
    target: (usize, usize),
    frame_index: usize,
    video_id: &Arc<str>,
) -> Result<FrameTensor> {
    if bg.size() != target {
        return Err(Error::shape(
            &[3, target.0, target.1],
            bg.mean_frame.tensor().shape(),
        ));
    }
    let resized = raw.resize_bilinear(target.0, target.1);
    let mut pixels = resized.tensor().clone();
    for (p, b) in pixels.data_mut().iter_mut().zip(bg.mean_frame.data()) {
        *p = (p.clamp(0.0, 1.0) - b).clamp(-1.0, 1.0);
    }
    if !pixels.all_finite() {
        return Err(Error::Decode {
            index: frame_index,
            reason: "non-finite pixel values".into(),
        });
    }
    Ok(FrameTensor {
        pixels,
        frame_index,
        video_id: Arc::clone(video_id),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vid() -> Arc<str> {
        Arc::from("v")
    }

    #[test]
    fn background_of_black_and_white_is_half() {
        let bg = compute_background([&FloatImage::filled(2, 3, 0.0), &FloatImage::filled(2, 3, 1.0)])
            .unwrap();
        assert!(bg.mean_frame.data().iter().all(|&v| v == 0.5));
        assert_eq!(bg.frame_count, 2);
    }

    #[test]
    fn background_of_one_frame_is_that_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut f = FloatImage::new(4, 5);
        f.data_mut().iter_mut().for_each(|v| *v = rng.gen());
        let bg = compute_background([&f]).unwrap();
        assert_eq!(bg.mean_frame, f);
    }

    #[test]
    fn background_of_uniform_noise_is_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames: Vec<FloatImage> = (0..100)
            .map(|_| {
                let mut f = FloatImage::new(6, 7);
                f.data_mut().iter_mut().for_each(|v| *v = rng.gen());
                f
            })
            .collect();
        let bg = compute_background(&frames).unwrap();
        // direct summation oracle
        for i in 0..bg.mean_frame.data().len() {
            let direct: f64 = frames.iter().map(|f| f.data()[i]).sum::<f64>() / 100.0;
            assert!((bg.mean_frame.data()[i] - direct).abs() < 1e-12);
            assert!((direct - 0.5).abs() <= 0.15);
        }
    }

    #[test]
    fn background_errors() {
        let empty: Vec<FloatImage> = vec![];
        assert!(matches!(compute_background(&empty), Err(Error::NoTrainingFrames)));
        let r = compute_background([&FloatImage::new(2, 2), &FloatImage::new(2, 3)]);
        assert!(matches!(r, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn frame_equal_to_background_gives_zero_residual() {
        let mut f = FloatImage::new(4, 4);
        f.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f64 / 7.0);
        let bg = compute_background([&f]).unwrap();
        let t = preprocess(&f, &bg, (4, 4), 0, &vid()).unwrap();
        assert!(t.pixels.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_on_black_background_is_one() {
        let bg = BackgroundModel::zeros(2, 2);
        let t = preprocess(&FloatImage::filled(2, 2, 1.0), &bg, (2, 2), 3, &vid()).unwrap();
        assert!(t.pixels.data().iter().all(|&v| v == 1.0));
        assert_eq!(t.frame_index, 3);
    }

    #[test]
    fn checkerboard_downscale_is_four_pixel_average() {
        let (h, w) = (8, 12);
        let mut f = FloatImage::new(h, w);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cells: Vec<f64> = (0..h * w).map(|_| rng.gen()).collect();
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    let checker = if (x + y) % 2 == 0 { 1.0 } else { 0.0 };
                    f.data_mut()[(c * h + y) * w + x] = 0.5 * checker + 0.5 * cells[y * w + x];
                }
            }
        }
        let r = f.resize_bilinear(h / 2, w / 2);
        for c in 0..3 {
            for y in 0..h / 2 {
                for x in 0..w / 2 {
                    let avg = (f.get(c, 2 * y, 2 * x)
                        + f.get(c, 2 * y + 1, 2 * x)
                        + f.get(c, 2 * y, 2 * x + 1)
                        + f.get(c, 2 * y + 1, 2 * x + 1))
                        / 4.0;
                    assert!((r.get(c, y, x) - avg).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn background_mismatch_rejected() {
        let bg = BackgroundModel::zeros(4, 4);
        let r = preprocess(&FloatImage::new(8, 8), &bg, (2, 2), 0, &vid());
        assert!(r.is_err());
    }

    #[test]
    fn subtraction_then_readdition_restores_resized_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut raw = FloatImage::new(10, 14);
        raw.data_mut().iter_mut().for_each(|v| *v = rng.gen());
        let mut bgf = FloatImage::new(5, 7);
        bgf.data_mut().iter_mut().for_each(|v| *v = rng.gen());
        let bg = compute_background([&bgf]).unwrap();
        let t = preprocess(&raw, &bg, (5, 7), 0, &vid()).unwrap();
        let resized = raw.resize_bilinear(5, 7);
        for ((r, b), o) in t.pixels.data().iter().zip(bg.mean_frame.data()).zip(resized.data()) {
            assert!((r + b - o).abs() < 1e-12);
        }
    }
}
