use rand::Rng;

use crate::nn::act::{leaky_relu, leaky_relu_backward};
use crate::nn::param::join;
use crate::nn::{BatchNorm, BatchNormCache, BatchStats, Conv, NormMode, Param, Parameterized, Tensor};

/// Where each BatchNorm layer of a sub-network takes its statistics from.
#[derive(Clone, Copy, Debug)]
pub enum Norm<'a> {
    /// Current batch; caches are kept for backpropagation.
    Batch,
    /// Running averages (inference).
    Running,
    /// Statistics recorded from an earlier batch pass, one entry per layer in order.
    Fixed(&'a [BatchStats]),
}

impl Norm<'_> {
    pub(crate) fn mode(&self, layer: usize) -> NormMode<'_> {
        match self {
            Norm::Batch => NormMode::Batch,
            Norm::Running => NormMode::Running,
            Norm::Fixed(stats) => NormMode::Fixed(&stats[layer]),
        }
    }
}

/// Convolution → BatchNorm → leaky ReLU.
#[derive(Clone, Debug)]
pub struct ConvUnit {
    pub conv: Conv,
    pub bn: BatchNorm,
}

#[derive(Clone, Debug)]
pub struct UnitCache {
    input: Tensor,
    bn: BatchNormCache,
    pre_act: Tensor,
}

impl UnitCache {
    pub fn stats(&self) -> &BatchStats {
        &self.bn.stats
    }
}

impl ConvUnit {
    pub fn new(conv: Conv) -> Self {
        let bn = BatchNorm::new(conv.out_channels());
        Self { conv, bn }
    }

    pub fn conv2d<R: Rng>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        Self::new(Conv::new_2d(cin, cout, stride, rng))
    }

    pub fn infer(&self, x: &Tensor, mode: NormMode<'_>, slope: f64) -> Tensor {
        let (h, _) = self.bn.forward(&self.conv.forward(x), mode);
        leaky_relu(&h, slope)
    }

    pub fn forward(&self, x: &Tensor, mode: NormMode<'_>, slope: f64) -> (Tensor, UnitCache) {
        let (pre_act, bn) = self.bn.forward(&self.conv.forward(x), mode);
        let y = leaky_relu(&pre_act, slope);
        (
            y,
            UnitCache {
                input: x.clone(),
                bn,
                pre_act,
            },
        )
    }

    pub fn backward(&mut self, cache: &UnitCache, dy: &Tensor, slope: f64, need_dx: bool) -> Option<Tensor> {
        let dh = leaky_relu_backward(&cache.pre_act, dy, slope);
        let dconv = self.bn.backward(&cache.bn, &dh);
        self.conv.backward(&cache.input, &dconv, need_dx)
    }
}

impl Parameterized for ConvUnit {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}
