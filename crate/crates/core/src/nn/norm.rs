use super::param::{join, Param, Parameterized};
use super::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel mean and biased variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Elements per channel the statistics were taken over.
    pub count: usize,
}

/// How a [`BatchNorm`] layer chooses its normalization statistics.
#[derive(Clone, Copy, Debug)]
pub enum NormMode<'a> {
    /// Statistics of the current batch (training).
    Batch,
    /// Running averages (inference).
    Running,
    /// Externally supplied statistics.
    Fixed(&'a BatchStats),
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
}

/// Values saved by [`BatchNorm::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    batch_stats: bool,
    pub stats: BatchStats,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::full(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Param::buffer(Tensor::zeros(&[channels])),
            running_var: Param::buffer(Tensor::full(&[channels], 1.0)),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn layout(&self, x: &Tensor) -> (usize, usize, usize) {
        let s = x.shape();
        assert!(s.len() >= 2 && s[1] == self.channels(), "batchnorm channel mismatch: {s:?}");
        (s[0], s[1], s[2..].iter().product())
    }

    fn batch_stats(&self, x: &Tensor) -> BatchStats {
        let (n, c, sp) = self.layout(x);
        let count = n * sp;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        let data = x.data();
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                mean[ch] += data[off..off + sp].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                let m = mean[ch];
                var[ch] += data[off..off + sp].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
            }
        }
        var.iter_mut().for_each(|v| *v /= count as f64);
        BatchStats { mean, var, count }
    }

    pub fn forward(&self, x: &Tensor, mode: NormMode<'_>) -> (Tensor, BatchNormCache) {
        let (n, c, sp) = self.layout(x);
        let (stats, batch_stats) = match mode {
            NormMode::Batch => (self.batch_stats(x), true),
            NormMode::Running => (
                BatchStats {
                    mean: self.running_mean.value.data().to_vec(),
                    var: self.running_var.value.data().to_vec(),
                    count: 0,
                },
                false,
            ),
            NormMode::Fixed(s) => (s.clone(), false),
        };
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut xhat = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                let (m, is) = (stats.mean[ch], inv_std[ch]);
                for i in off..off + sp {
                    let h = (x.data()[i] - m) * is;
                    xhat.data_mut()[i] = h;
                    y.data_mut()[i] = gamma[ch] * h + beta[ch];
                }
            }
        }
        (
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_stats,
                stats,
            },
        )
    }

    /// Folds batch statistics into the running averages (unbiased variance).
    pub fn update_running(&mut self, stats: &BatchStats) {
        let n = stats.count as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let rm = self.running_mean.value.data_mut();
        for (r, m) in rm.iter_mut().zip(&stats.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        let rv = self.running_var.value.data_mut();
        for (r, v) in rv.iter_mut().zip(&stats.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * correction;
        }
    }

    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Tensor) -> Tensor {
        let (n, c, sp) = self.layout(dy);
        let count = (n * sp) as f64;
        let gamma = self.gamma.value.data().to_vec();
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                for i in off..off + sp {
                    sum_dy[ch] += dy.data()[i];
                    sum_dy_xhat[ch] += dy.data()[i] * cache.xhat.data()[i];
                }
            }
        }
        for ch in 0..c {
            self.gamma.grad.data_mut()[ch] += sum_dy_xhat[ch];
            self.beta.grad.data_mut()[ch] += sum_dy[ch];
        }
        let mut dx = Tensor::zeros(dy.shape());
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * sp;
                let k = gamma[ch] * cache.inv_std[ch];
                for i in off..off + sp {
                    let g = dy.data()[i];
                    dx.data_mut()[i] = if cache.batch_stats {
                        k * (g - sum_dy[ch] / count - cache.xhat.data()[i] * sum_dy_xhat[ch] / count)
                    } else {
                        k * g
                    };
                }
            }
        }
        dx
    }
}

impl Parameterized for BatchNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
