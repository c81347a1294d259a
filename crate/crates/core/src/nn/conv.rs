//! Convolution over up to three spatial axes via im2col + GEMM.
//!
//! 4-D inputs `[N, C, H, W]` are treated as `[N, C, 1, H, W]`, so the same
//! kernel serves the 2-D appearance network and the 3-D motion model.

use rand::Rng;
use rand_distr::StandardNormal;

use super::param::{join, Param, Parameterized};
use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Geometry {
    cin: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn cols_rows(&self) -> usize {
        self.cin * self.kernel.iter().product::<usize>()
    }

    fn out_len(&self) -> usize {
        self.output.iter().product()
    }

    fn in_len(&self) -> usize {
        self.input.iter().product()
    }
}

pub(crate) fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - kernel) / stride + 1
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: Param,
    pub bias: Param,
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
}

impl Conv {
    pub fn new<R: Rng>(
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let fan_in = (cin * kernel.iter().product::<usize>()) as f64;
        let std = (2.0 / fan_in).sqrt();
        let len = cout * fan_in as usize;
        let w: Vec<f64> = (0..len)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            weight: Param::new(Tensor::from_vec(
                &[cout, cin, kernel[0], kernel[1], kernel[2]],
                w,
            )),
            bias: Param::new(Tensor::zeros(&[cout])),
            kernel,
            stride,
            pad,
        }
    }

    /// 3×3 spatial convolution with padding 1.
    pub fn new_2d<R: Rng>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Self {
        Self::new(cin, cout, [1, 3, 3], [1, stride, stride], [0, 1, 1], rng)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    fn geometry(&self, x: &Tensor) -> Geometry {
        let s = x.shape();
        let (cin, input) = match s.len() {
            4 => (s[1], [1, s[2], s[3]]),
            5 => (s[1], [s[2], s[3], s[4]]),
            _ => panic!("conv expects a 4-D or 5-D input, got {s:?}"),
        };
        assert_eq!(cin, self.in_channels(), "conv input channel mismatch");
        let mut output = [0; 3];
        for a in 0..3 {
            assert!(
                input[a] + 2 * self.pad[a] >= self.kernel[a],
                "conv input too small along axis {a}: {s:?}"
            );
            output[a] = conv_out_len(input[a], self.kernel[a], self.stride[a], self.pad[a]);
        }
        Geometry {
            cin,
            input,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            output,
        }
    }

    fn output_shape(&self, x: &Tensor, g: &Geometry) -> Vec<usize> {
        let n = x.batch();
        if x.shape().len() == 4 {
            vec![n, self.out_channels(), g.output[1], g.output[2]]
        } else {
            vec![n, self.out_channels(), g.output[0], g.output[1], g.output[2]]
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let g = self.geometry(x);
        let cout = self.out_channels();
        let (k, p) = (g.cols_rows(), g.out_len());
        let mut y = Tensor::zeros(&self.output_shape(x, &g));
        let mut cols = vec![0.0; k * p];
        let w = self.weight.value.data();
        let b = self.bias.value.data();
        for n in 0..x.batch() {
            im2col(x.item(n), &g, &mut cols);
            let out = y.item_mut(n);
            for (co, row) in out.chunks_mut(p).enumerate() {
                row.fill(b[co]);
            }
            gemm(cout, k, p, w, false, &cols, false, out, 1.0);
        }
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx` when `need_input_grad`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, need_input_grad: bool) -> Option<Tensor> {
        let g = self.geometry(x);
        let cout = self.out_channels();
        let (k, p) = (g.cols_rows(), g.out_len());
        let mut cols = vec![0.0; k * p];
        let mut dcols = vec![0.0; k * p];
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        for n in 0..x.batch() {
            let dyn_ = dy.item(n);
            {
                let db = self.bias.grad.data_mut();
                for (co, row) in dyn_.chunks(p).enumerate() {
                    db[co] += row.iter().sum::<f64>();
                }
            }
            im2col(x.item(n), &g, &mut cols);
            // dW (cout × k) += dY (cout × p) · colsᵀ (p × k)
            gemm(cout, p, k, dyn_, false, &cols, true, self.weight.grad.data_mut(), 1.0);
            if let Some(dx) = dx.as_mut() {
                // dcols (k × p) = Wᵀ (k × cout) · dY (cout × p)
                gemm(k, cout, p, self.weight.value.data(), true, dyn_, false, &mut dcols, 0.0);
                col2im(&dcols, &g, dx.item_mut(n));
            }
        }
        dx
    }
}

impl Parameterized for Conv {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let [d_in, h_in, w_in] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let p = g.out_len();
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &x[ci * g.in_len()..(ci + 1) * g.in_len()];
        for a in 0..kd {
            for b in 0..kh {
                for c in 0..kw {
                    let dst = &mut cols[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for zd in 0..od {
                        let id = (zd * g.stride[0] + a) as isize - g.pad[0] as isize;
                        for zh in 0..oh {
                            let ih = (zh * g.stride[1] + b) as isize - g.pad[1] as isize;
                            let row_ok = id >= 0
                                && (id as usize) < d_in
                                && ih >= 0
                                && (ih as usize) < h_in;
                            if !row_ok {
                                dst[idx..idx + ow].fill(0.0);
                                idx += ow;
                                continue;
                            }
                            let base = (id as usize * h_in + ih as usize) * w_in;
                            for zw in 0..ow {
                                let iw = (zw * g.stride[2] + c) as isize - g.pad[2] as isize;
                                dst[idx] = if iw >= 0 && (iw as usize) < w_in {
                                    plane[base + iw as usize]
                                } else {
                                    0.0
                                };
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, dx: &mut [f64]) {
    let [d_in, h_in, w_in] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let p = g.out_len();
    let in_len = g.in_len();
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * in_len..(ci + 1) * in_len];
        for a in 0..kd {
            for b in 0..kh {
                for c in 0..kw {
                    let src = &cols[row * p..(row + 1) * p];
                    let mut idx = 0;
                    for zd in 0..od {
                        let id = (zd * g.stride[0] + a) as isize - g.pad[0] as isize;
                        for zh in 0..oh {
                            let ih = (zh * g.stride[1] + b) as isize - g.pad[1] as isize;
                            if id < 0 || id as usize >= d_in || ih < 0 || ih as usize >= h_in {
                                idx += ow;
                                continue;
                            }
                            let base = (id as usize * h_in + ih as usize) * w_in;
                            for zw in 0..ow {
                                let iw = (zw * g.stride[2] + c) as isize - g.pad[2] as isize;
                                if iw >= 0 && (iw as usize) < w_in {
                                    plane[base + iw as usize] += src[idx];
                                }
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// `C (m × n) = A (m × k) · B (k × n) + beta · C`, all row-major; `*_t` reads the
/// stored operand as its transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slice lengths above cover every index reachable from the
    // given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
