//! Motion model: `k` latent codes stacked along a temporal axis pass through
//! Conv3D blocks (3×3×3 kernel, temporal stride 2, spatial stride 1,
//! padding 1, BatchNorm, leaky ReLU). A final convolution spanning the
//! remaining temporal extent with a 1×1 spatial footprint yields one code.

use rand::Rng;

use super::unit::{ConvUnit, Norm, UnitCache};
use super::ModelConfig;
use crate::nn::param::join;
use crate::nn::{Conv, Param, Parameterized, Tensor};

#[derive(Clone, Debug)]
pub struct MotionModel {
    blocks: Vec<ConvUnit>,
    head: Conv,
    slope: f64,
}

#[derive(Clone, Debug)]
pub struct MotionCache {
    blocks: Vec<UnitCache>,
    head_input: Tensor,
    /// Temporal extent after each block.
    pub temporal_sizes: Vec<usize>,
}

/// `[S·k, C, h, w]` (sequence-major) → `[S, C, k, h, w]`.
pub fn stack_time(latents: &Tensor, k: usize) -> Tensor {
    let s = latents.shape();
    assert_eq!(s[0] % k, 0, "latent batch not a multiple of k");
    let (seqs, c, sp) = (s[0] / k, s[1], s[2] * s[3]);
    let mut out = Tensor::zeros(&[seqs, c, k, s[2], s[3]]);
    let src = latents.data();
    let dst = out.data_mut();
    for n in 0..seqs {
        for t in 0..k {
            for ch in 0..c {
                let from = ((n * k + t) * c + ch) * sp;
                let to = ((n * c + ch) * k + t) * sp;
                dst[to..to + sp].copy_from_slice(&src[from..from + sp]);
            }
        }
    }
    out
}

/// Inverse of [`stack_time`].
pub fn unstack_time(stacked: &Tensor) -> Tensor {
    let s = stacked.shape();
    let (seqs, c, k, sp) = (s[0], s[1], s[2], s[3] * s[4]);
    let mut out = Tensor::zeros(&[seqs * k, c, s[3], s[4]]);
    let src = stacked.data();
    let dst = out.data_mut();
    for n in 0..seqs {
        for t in 0..k {
            for ch in 0..c {
                let to = ((n * k + t) * c + ch) * sp;
                let from = ((n * c + ch) * k + t) * sp;
                dst[to..to + sp].copy_from_slice(&src[from..from + sp]);
            }
        }
    }
    out
}

impl MotionModel {
    pub fn new<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.latent_channels;
        let blocks = (0..cfg.motion_blocks)
            .map(|_| ConvUnit::new(Conv::new(c, c, [3, 3, 3], [2, 1, 1], [1, 1, 1], rng)))
            .collect();
        let depth = *cfg.motion_temporal_sizes().last().expect("at least one block");
        let head = Conv::new(c, c, [depth, 1, 1], [1, 1, 1], [0, 0, 0], rng);
        Self {
            blocks,
            head,
            slope: cfg.leaky_slope,
        }
    }

    fn collapse(y: Tensor) -> Tensor {
        let s = y.shape().to_vec();
        debug_assert_eq!(s[2], 1);
        y.reshape(&[s[0], s[1], s[3], s[4]])
    }

    /// `[S, C, k, h, w]` → predicted codes `[S, C, h, w]`.
    pub fn infer(&self, stack: &Tensor, norm: Norm<'_>) -> Tensor {
        let mut h = stack.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.infer(&h, norm.mode(i), self.slope);
        }
        Self::collapse(self.head.forward(&h))
    }

    pub fn forward(&self, stack: &Tensor, norm: Norm<'_>) -> (Tensor, MotionCache) {
        let mut h = stack.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut temporal_sizes = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let (y, c) = b.forward(&h, norm.mode(i), self.slope);
            temporal_sizes.push(y.shape()[2]);
            caches.push(c);
            h = y;
        }
        let out = Self::collapse(self.head.forward(&h));
        (
            out,
            MotionCache {
                blocks: caches,
                head_input: h,
                temporal_sizes,
            },
        )
    }

    /// Returns the gradient with respect to the stacked input.
    pub fn backward(&mut self, cache: &MotionCache, d_out: &Tensor) -> Tensor {
        let s = d_out.shape();
        let d5 = d_out.clone().reshape(&[s[0], s[1], 1, s[2], s[3]]);
        let mut dh = self
            .head
            .backward(&cache.head_input, &d5, true)
            .expect("input grad requested");
        for i in (0..self.blocks.len()).rev() {
            dh = self.blocks[i]
                .backward(&cache.blocks[i], &dh, self.slope, true)
                .expect("input grad requested");
        }
        dh
    }

    pub fn update_running_stats(&mut self, cache: &MotionCache) {
        for (u, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            u.bn.update_running(c.stats());
        }
    }
}

impl Parameterized for MotionModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
