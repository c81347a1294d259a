//! Per-frame appearance encoder: `B` blocks of {3×3 conv, 3×3 stride-2 conv},
//! each followed by BatchNorm and leaky ReLU. Every block output is kept as a
//! pyramid level; the last one is the latent code.

use rand::Rng;

use super::unit::{ConvUnit, Norm, UnitCache};
use super::ModelConfig;
use crate::nn::param::join;
use crate::nn::{BatchStats, Param, Parameterized, Tensor};

#[derive(Clone, Debug)]
pub struct Encoder {
    /// Two units per block, in forward order.
    units: Vec<ConvUnit>,
    slope: f64,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    units: Vec<UnitCache>,
}

impl EncoderCache {
    /// Per-layer batch statistics, usable with [`Norm::Fixed`].
    pub fn stats(&self) -> Vec<BatchStats> {
        self.units.iter().map(|u| u.stats().clone()).collect()
    }
}

impl Encoder {
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut units = Vec::with_capacity(2 * cfg.encoder_blocks);
        let mut cin = 3;
        for level in 1..=cfg.encoder_blocks {
            let c = cfg.level_channels(level);
            units.push(ConvUnit::conv2d(cin, c, 1, rng));
            units.push(ConvUnit::conv2d(c, c, 2, rng));
            cin = c;
        }
        Self {
            units,
            slope: cfg.leaky_slope,
        }
    }

    pub fn blocks(&self) -> usize {
        self.units.len() / 2
    }

    /// Pyramid levels `1..=B` for a batch `[N, 3, H, W]`.
    pub fn infer(&self, x: &Tensor, norm: Norm<'_>) -> Vec<Tensor> {
        let mut levels = Vec::with_capacity(self.blocks());
        let mut h = x.clone();
        for (i, unit) in self.units.iter().enumerate() {
            h = unit.infer(&h, norm.mode(i), self.slope);
            if i % 2 == 1 {
                levels.push(h.clone());
            }
        }
        levels
    }

    pub fn forward(&self, x: &Tensor, norm: Norm<'_>) -> (Vec<Tensor>, EncoderCache) {
        let mut levels = Vec::with_capacity(self.blocks());
        let mut caches = Vec::with_capacity(self.units.len());
        let mut h = x.clone();
        for (i, unit) in self.units.iter().enumerate() {
            let (y, c) = unit.forward(&h, norm.mode(i), self.slope);
            caches.push(c);
            h = y;
            if i % 2 == 1 {
                levels.push(h.clone());
            }
        }
        (levels, EncoderCache { units: caches })
    }

    /// Backpropagates gradients arriving at each pyramid level (`None` = zero).
    pub fn backward(&mut self, cache: &EncoderCache, mut level_grads: Vec<Option<Tensor>>) {
        assert_eq!(level_grads.len(), self.blocks());
        let mut carry: Option<Tensor> = None;
        for i in (0..self.units.len()).rev() {
            if i % 2 == 1 {
                let incoming = level_grads[i / 2].take();
                carry = match (carry, incoming) {
                    (Some(mut a), Some(b)) => {
                        a.add_assign(&b);
                        Some(a)
                    }
                    (a, b) => a.or(b),
                };
            }
            let Some(dy) = carry.take() else { continue };
            carry = self.units[i].backward(&cache.units[i], &dy, self.slope, i > 0);
        }
    }

    /// Folds the batch statistics of a training pass into the running averages.
    pub fn update_running_stats(&mut self, cache: &EncoderCache) {
        for (u, c) in self.units.iter_mut().zip(&cache.units) {
            u.bn.update_running(c.stats());
        }
    }
}

impl Parameterized for Encoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, u) in self.units.iter().enumerate() {
            u.visit(&join(prefix, &format!("block{}.unit{}", i / 2, i % 2)), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, u) in self.units.iter_mut().enumerate() {
            u.visit_mut(&join(prefix, &format!("block{}.unit{}", i / 2, i % 2)), f);
        }
    }
}
