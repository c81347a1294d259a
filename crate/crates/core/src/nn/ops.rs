//! Shape-manipulating layers without parameters.

use super::Tensor;

/// Nearest-neighbour ×2 upsampling of `[N, C, H, W]`.
pub fn upsample2x(x: &Tensor) -> Tensor {
    let s = x.shape();
    assert_eq!(s.len(), 4, "upsample expects [N, C, H, W]");
    let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
    let mut y = Tensor::zeros(&[s[0], s[1], 2 * h, 2 * w]);
    let (src, dst) = (x.data(), y.data_mut());
    for p in 0..nc {
        for i in 0..2 * h {
            for j in 0..2 * w {
                dst[(p * 2 * h + i) * 2 * w + j] = src[(p * h + i / 2) * w + j / 2];
            }
        }
    }
    y
}

pub fn upsample2x_backward(dy: &Tensor) -> Tensor {
    let s = dy.shape();
    let (nc, h, w) = (s[0] * s[1], s[2] / 2, s[3] / 2);
    let mut dx = Tensor::zeros(&[s[0], s[1], h, w]);
    let (src, dst) = (dy.data(), dx.data_mut());
    for p in 0..nc {
        for i in 0..2 * h {
            for j in 0..2 * w {
                dst[(p * h + i / 2) * w + j / 2] += src[(p * 2 * h + i) * 2 * w + j];
            }
        }
    }
    dx
}

/// Concatenates along the channel axis (axis 1).
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (sa, sb) = (a.shape(), b.shape());
    assert_eq!(sa[0], sb[0], "concat batch mismatch");
    assert_eq!(sa[2..], sb[2..], "concat spatial mismatch: {sa:?} vs {sb:?}");
    let mut shape = sa.to_vec();
    shape[1] += sb[1];
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..sa[0] {
        data.extend_from_slice(a.item(n));
        data.extend_from_slice(b.item(n));
    }
    Tensor::from_vec(&shape, data)
}

/// Splits a channel-axis gradient back into the parts of [`concat_channels`].
pub fn split_channels(d: &Tensor, first: usize) -> (Tensor, Tensor) {
    let s = d.shape();
    let sp: usize = s[2..].iter().product();
    let (la, lb) = (first * sp, (s[1] - first) * sp);
    let mut a = Vec::with_capacity(s[0] * la);
    let mut b = Vec::with_capacity(s[0] * lb);
    for n in 0..s[0] {
        let item = d.item(n);
        a.extend_from_slice(&item[..la]);
        b.extend_from_slice(&item[la..]);
    }
    let mut shape_a = s.to_vec();
    shape_a[1] = first;
    let mut shape_b = s.to_vec();
    shape_b[1] = s[1] - first;
    (Tensor::from_vec(&shape_a, a), Tensor::from_vec(&shape_b, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsample_repeats_pixels() {
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]);
        let y = upsample2x(&x);
        assert_eq!(y.shape(), &[1, 1, 2, 4]);
        assert_eq!(y.data(), &[1., 1., 2., 2., 1., 1., 2., 2.]);
        assert_eq!(upsample2x_backward(&y).data(), &[4.0, 8.0]);
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::from_vec(&[2, 1, 2], vec![1., 2., 3., 4.]);
        let b = Tensor::from_vec(&[2, 2, 2], vec![5., 6., 7., 8., 9., 10., 11., 12.]);
        let c = concat_channels(&a, &b);
        assert_eq!(c.shape(), &[2, 3, 2]);
        assert_eq!(c.item(1), &[3., 4., 9., 10., 11., 12.]);
        let (da, db) = split_channels(&c, 1);
        assert_eq!((da, db), (a, b));
    }
}
