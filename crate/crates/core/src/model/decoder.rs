//! Frame decoder. At each level, from the latent resolution upward, the
//! incoming features are concatenated with the *previous* frame's pyramid
//! level, passed through two conv units and upsampled ×2. A 3×3 conv and tanh
//! produce the residual frame.

use rand::Rng;

use super::unit::{ConvUnit, Norm, UnitCache};
use super::ModelConfig;
use crate::nn::act::{tanh, tanh_backward};
use crate::nn::ops::{concat_channels, split_channels, upsample2x, upsample2x_backward};
use crate::nn::param::join;
use crate::nn::{Conv, Param, Parameterized, Tensor};

#[derive(Clone, Debug)]
pub struct Decoder {
    /// Two units per level, ordered from level `B` down to level 1.
    units: Vec<ConvUnit>,
    head: Conv,
    slope: f64,
}

#[derive(Clone, Debug)]
pub struct DecoderCache {
    units: Vec<UnitCache>,
    /// Channel count of the non-shortcut half at each concat.
    split_at: Vec<usize>,
    head_input: Tensor,
    output: Tensor,
}

/// Gradients with respect to the decoder inputs.
pub struct DecoderGrads {
    pub latent: Tensor,
    /// Indexed by level − 1.
    pub pyramid: Vec<Tensor>,
}

impl Decoder {
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut units = Vec::with_capacity(2 * cfg.encoder_blocks);
        for level in (1..=cfg.encoder_blocks).rev() {
            let cin = cfg.level_channels(level);
            let cout = cfg.level_channels(level - 1);
            units.push(ConvUnit::conv2d(2 * cin, cout, 1, rng));
            units.push(ConvUnit::conv2d(cout, cout, 1, rng));
        }
        let head = Conv::new_2d(cfg.level_channels(0), 3, 1, rng);
        Self {
            units,
            head,
            slope: cfg.leaky_slope,
        }
    }

    fn levels(&self) -> usize {
        self.units.len() / 2
    }

    pub fn infer(&self, latent: &Tensor, prev: &[Tensor], norm: Norm<'_>) -> Tensor {
        assert_eq!(prev.len(), self.levels());
        let mut x = latent.clone();
        for (j, pair) in self.units.chunks(2).enumerate() {
            let level = self.levels() - j;
            let cat = concat_channels(&x, &prev[level - 1]);
            let h = pair[0].infer(&cat, norm.mode(2 * j), self.slope);
            let h = pair[1].infer(&h, norm.mode(2 * j + 1), self.slope);
            x = upsample2x(&h);
        }
        tanh(&self.head.forward(&x))
    }

    /// Decodes a batch of latents `[N, C, h, w]` against previous-frame pyramids (`prev[l-1]` is `[N, c_l, ..]`).
    pub fn forward(&self, latent: &Tensor, prev: &[Tensor], norm: Norm<'_>) -> (Tensor, DecoderCache) {
        assert_eq!(prev.len(), self.levels());
        let mut x = latent.clone();
        let mut caches = Vec::with_capacity(self.units.len());
        let mut split_at = Vec::with_capacity(self.levels());
        for (j, pair) in self.units.chunks(2).enumerate() {
            let level = self.levels() - j;
            split_at.push(x.shape()[1]);
            let cat = concat_channels(&x, &prev[level - 1]);
            let (h, c0) = pair[0].forward(&cat, norm.mode(2 * j), self.slope);
            let (h, c1) = pair[1].forward(&h, norm.mode(2 * j + 1), self.slope);
            caches.push(c0);
            caches.push(c1);
            x = upsample2x(&h);
        }
        let output = tanh(&self.head.forward(&x));
        (
            output.clone(),
            DecoderCache {
                units: caches,
                split_at,
                head_input: x,
                output,
            },
        )
    }

    pub fn backward(&mut self, cache: &DecoderCache, d_out: &Tensor) -> DecoderGrads {
        let d_head = tanh_backward(&cache.output, d_out);
        let mut dx = self
            .head
            .backward(&cache.head_input, &d_head, true)
            .expect("input grad requested");
        let levels = self.levels();
        let mut pyramid: Vec<Option<Tensor>> = vec![None; levels];
        for j in (0..levels).rev() {
            let level = levels - j;
            let dh = upsample2x_backward(&dx);
            let dh = self.units[2 * j + 1]
                .backward(&cache.units[2 * j + 1], &dh, self.slope, true)
                .expect("input grad requested");
            let dcat = self.units[2 * j]
                .backward(&cache.units[2 * j], &dh, self.slope, true)
                .expect("input grad requested");
            let (d_x, d_prev) = split_channels(&dcat, cache.split_at[j]);
            pyramid[level - 1] = Some(d_prev);
            dx = d_x;
        }
        DecoderGrads {
            latent: dx,
            pyramid: pyramid.into_iter().map(|p| p.expect("every level visited")).collect(),
        }
    }

    pub fn update_running_stats(&mut self, cache: &DecoderCache) {
        for (u, c) in self.units.iter_mut().zip(&cache.units) {
            u.bn.update_running(c.stats());
        }
    }

    /// Input channel count of the first conv at each level, from level `B` down.
    pub fn concat_channels(&self) -> Vec<usize> {
        self.units.chunks(2).map(|p| p[0].conv.in_channels()).collect()
    }
}

impl Parameterized for Decoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, u) in self.units.iter().enumerate() {
            u.visit(&join(prefix, &format!("level{}.unit{}", self.levels() - i / 2, i % 2)), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        let levels = self.levels();
        for (i, u) in self.units.iter_mut().enumerate() {
            u.visit_mut(&join(prefix, &format!("level{}.unit{}", levels - i / 2, i % 2)), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
