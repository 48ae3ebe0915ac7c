use rayon::prelude::*;

use super::{expect_shape, LayerError};
use crate::linalg::{gemm, MatRef};
use crate::tensor::{Scalar, Tensor};

/// Zero padding on each side of the spatial extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    /// Padding that preserves spatial extents at stride 1. Even kernels pad
    /// one less on the top/left than on the bottom/right.
    pub fn same(kh: usize, kw: usize) -> Self {
        let top = (kh - 1) / 2;
        let left = (kw - 1) / 2;
        Self { top, bottom: kh - 1 - top, left, right: kw - 1 - left }
    }

    pub fn valid() -> Self {
        Self::default()
    }

    pub fn symmetric(ph: usize, pw: usize) -> Self {
        Self { top: ph, bottom: ph, left: pw, right: pw }
    }
}

/// Kernel, bias and padding of a convolution or transposed convolution.
///
/// Convolution weights are `(out_ch, in_ch, kh, kw)`. Transposed
/// convolution weights are `(in_ch, out_ch, kh, kw)`, i.e. the kernel of the
/// convolution it is the adjoint of.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub padding: Padding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn kernel(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s[2], s[3])
    }

    fn weight_dims(&self) -> Result<(usize, usize, usize, usize), LayerError> {
        Ok(self.weight.dims4()?)
    }
}

/// Sliding-window geometry between an "image" side `(channels, h, w)` and the
/// convolution output grid `(out_h, out_w)`.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    pad: Padding,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Output columns `[lo, hi)` whose source column `ox + kj - left` lies
    /// inside the image.
    fn x_range(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.left.saturating_sub(kj).min(self.out_w);
        let hi = (self.w + self.pad.left).saturating_sub(kj).min(self.out_w).max(lo);
        (lo, hi)
    }
}

fn im2col<T: Scalar>(img: &[T], g: &Geometry, col: &mut [T]) {
    let n = g.col_cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * n..(row + 1) * n];
                let (lo, hi) = g.x_range(kj);
                for oy in 0..g.out_h {
                    let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    let iy = (oy + ki) as isize - g.pad.top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    drow[..lo].fill(T::zero());
                    drow[hi..].fill(T::zero());
                    if hi > lo {
                        let src0 = iy as usize * g.w + lo + kj - g.pad.left;
                        drow[lo..hi].copy_from_slice(&plane[src0..src0 + (hi - lo)]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto the image.
fn col2im<T: Scalar>(col: &[T], g: &Geometry, img: &mut [T]) {
    let n = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * n..(row + 1) * n];
                let (lo, hi) = g.x_range(kj);
                if hi <= lo {
                    continue;
                }
                for oy in 0..g.out_h {
                    let iy = (oy + ki) as isize - g.pad.top as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst0 = iy as usize * g.w + lo + kj - g.pad.left;
                    let dst = &mut plane[dst0..dst0 + (hi - lo)];
                    for (d, &s) in dst.iter_mut().zip(&src[oy * g.out_w + lo..oy * g.out_w + hi]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn accumulate_bias_grad<T: Scalar>(grad_out: &[T], plane: usize, grad_b: &mut [T]) {
    for (chunk, gb) in grad_out.chunks(plane).zip(grad_b.iter_mut()) {
        *gb = *gb + chunk.iter().fold(T::zero(), |a, &v| a + v);
    }
}

fn conv_geometry<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<(usize, usize, Geometry), LayerError> {
    let (b, c, h, w) = x.dims4()?;
    let (o, ci, kh, kw) = p.weight_dims()?;
    if ci != c {
        return Err(LayerError::ChannelMismatch { expected: ci, found: c });
    }
    expect_shape(p.bias.shape(), &[o])?;
    let pad = p.padding;
    if h + pad.top + pad.bottom < kh || w + pad.left + pad.right < kw {
        return Err(LayerError::EmptyOutput { input: x.shape().to_vec(), kernel: (kh, kw) });
    }
    let out_h = h + pad.top + pad.bottom - kh + 1;
    let out_w = w + pad.left + pad.right - kw + 1;
    Ok((b, o, Geometry { channels: c, h, w, kh, kw, pad, out_h, out_w }))
}

/// Stride-1 cross-correlation with zero padding.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>, LayerError> {
    let (b, o, g) = conv_geometry(x, p)?;
    let (k, n) = (g.col_rows(), g.col_cols());
    let in_len = g.channels * g.h * g.w;
    let mut out = Tensor::zeros(&[b, o, g.out_h, g.out_w]);
    let xs = x.data();
    let w = MatRef::row_major(p.weight.data(), o, k);
    out.data_mut().par_chunks_mut(o * n).enumerate().for_each_init(
        || vec![T::zero(); k * n],
        |col, (bi, out_b)| {
            im2col(&xs[bi * in_len..(bi + 1) * in_len], &g, col);
            gemm(T::one(), w, MatRef::row_major(col, k, n), T::zero(), out_b);
            add_bias(out_b, p.bias.data(), n);
        },
    );
    Ok(out)
}

/// Gradients of a scalar loss through [`conv2d_forward`].
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, LayerError> {
    let (b, o, g) = conv_geometry(x, p)?;
    expect_shape(grad_out.shape(), &[b, o, g.out_h, g.out_w])?;
    let (k, n) = (g.col_rows(), g.col_cols());
    let in_len = g.channels * g.h * g.w;
    let w = MatRef::row_major(p.weight.data(), o, k);

    let mut grad_x = Tensor::zeros(x.shape());
    let mut grad_w = Tensor::zeros(p.weight.shape());
    let mut grad_b = Tensor::zeros(p.bias.shape());
    let mut col = vec![T::zero(); k * n];
    for bi in 0..b {
        let g_b = &grad_out.data()[bi * o * n..(bi + 1) * o * n];
        im2col(&x.data()[bi * in_len..(bi + 1) * in_len], &g, &mut col);
        gemm(T::one(), MatRef::row_major(g_b, o, n), MatRef::row_major(&col, k, n).t(), T::one(), grad_w.data_mut());
        accumulate_bias_grad(g_b, n, grad_b.data_mut());
        gemm(T::one(), w.t(), MatRef::row_major(g_b, o, n), T::zero(), &mut col);
        col2im(&col, &g, &mut grad_x.data_mut()[bi * in_len..(bi + 1) * in_len]);
    }
    Ok(ConvGrads { input: grad_x, weight: grad_w, bias: grad_b })
}

fn deconv_geometry<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<(usize, usize, Geometry), LayerError> {
    let (b, c, h, w) = x.dims4()?;
    let (ci, o, kh, kw) = p.weight_dims()?;
    if ci != c {
        return Err(LayerError::ChannelMismatch { expected: ci, found: c });
    }
    expect_shape(p.bias.shape(), &[o])?;
    let pad = p.padding;
    if h + kh <= 1 + pad.top + pad.bottom || w + kw <= 1 + pad.left + pad.right {
        return Err(LayerError::EmptyOutput { input: x.shape().to_vec(), kernel: (kh, kw) });
    }
    let out_h = h + kh - 1 - pad.top - pad.bottom;
    let out_w = w + kw - 1 - pad.left - pad.right;
    // The image side of the geometry is the deconvolution output; the column
    // grid is the deconvolution input.
    Ok((b, c, Geometry { channels: o, h: out_h, w: out_w, kh, kw, pad, out_h: h, out_w: w }))
}

/// Stride-1 transposed convolution: the adjoint of [`conv2d_forward`] with the
/// same kernel and padding, plus a per-channel bias.
pub fn deconv2d_forward<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>, LayerError> {
    let (b, ci, g) = deconv_geometry(x, p)?;
    let (k, n) = (g.col_rows(), g.col_cols());
    let out_len = g.channels * g.h * g.w;
    let mut out = Tensor::zeros(&[b, g.channels, g.h, g.w]);
    let xs = x.data();
    let w = MatRef::row_major(p.weight.data(), ci, k);
    out.data_mut().par_chunks_mut(out_len).enumerate().for_each_init(
        || vec![T::zero(); k * n],
        |col, (bi, out_b)| {
            gemm(T::one(), w.t(), MatRef::row_major(&xs[bi * ci * n..(bi + 1) * ci * n], ci, n), T::zero(), col);
            col2im(col, &g, out_b);
            add_bias(out_b, p.bias.data(), g.h * g.w);
        },
    );
    Ok(out)
}

pub fn deconv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, LayerError> {
    let (b, ci, g) = deconv_geometry(x, p)?;
    expect_shape(grad_out.shape(), &[b, g.channels, g.h, g.w])?;
    let (k, n) = (g.col_rows(), g.col_cols());
    let out_len = g.channels * g.h * g.w;
    let w = MatRef::row_major(p.weight.data(), ci, k);

    let mut grad_x = Tensor::zeros(x.shape());
    let mut grad_w = Tensor::zeros(p.weight.shape());
    let mut grad_b = Tensor::zeros(p.bias.shape());
    let mut col = vec![T::zero(); k * n];
    for bi in 0..b {
        let g_b = &grad_out.data()[bi * out_len..(bi + 1) * out_len];
        let x_b = &x.data()[bi * ci * n..(bi + 1) * ci * n];
        im2col(g_b, &g, &mut col);
        gemm(T::one(), w, MatRef::row_major(&col, k, n), T::zero(), &mut grad_x.data_mut()[bi * ci * n..(bi + 1) * ci * n]);
        gemm(T::one(), MatRef::row_major(x_b, ci, n), MatRef::row_major(&col, k, n).t(), T::one(), grad_w.data_mut());
        accumulate_bias_grad(g_b, g.h * g.w, grad_b.data_mut());
    }
    Ok(ConvGrads { input: grad_x, weight: grad_w, bias: grad_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn params(weight: Tensor<f64>, bias: Vec<f64>, padding: Padding) -> ConvParams<f64> {
        let n = bias.len();
        ConvParams { weight, bias: Tensor::from_vec(&[n], bias).unwrap(), padding }
    }

    /// Direct loop-nest convolution, independent of im2col.
    fn naive_conv(x: &Tensor<f64>, p: &ConvParams<f64>) -> Tensor<f64> {
        let (b, c, h, w) = x.dims4().unwrap();
        let (o, _, kh, kw) = p.weight.dims4().unwrap();
        let pad = p.padding;
        let oh = h + pad.top + pad.bottom - kh + 1;
        let ow = w + pad.left + pad.right - kw + 1;
        let mut out = Tensor::zeros(&[b, o, oh, ow]);
        for bi in 0..b {
            for oc in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = p.bias.data()[oc];
                        for ic in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let iy = y as isize + i as isize - pad.top as isize;
                                    let ix = xx as isize + j as isize - pad.left as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += x.data()[((bi * c + ic) * h + iy as usize) * w + ix as usize]
                                            * p.weight.data()[((oc * c + ic) * kh + i) * kw + j];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((bi * o + oc) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn ones_kernel_same_padding() {
        let x = Tensor::ones(&[1, 1, 3, 3]);
        let p = params(Tensor::ones(&[1, 1, 3, 3]), vec![0.0], Padding::same(3, 3));
        let y = conv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data()[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(y.data()[corner], 4.0);
        }
    }

    #[test]
    fn zero_kernel_gives_bias_map() {
        let mut rng = Rng::new(1);
        let x = Tensor::random_normal(&mut rng, &[2, 3, 5, 4], 0.0, 1.0).unwrap();
        let p = params(Tensor::zeros(&[2, 3, 3, 3]), vec![0.5, -2.0], Padding::same(3, 3));
        let y = conv2d_forward(&x, &p).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let ch = (i / 20) % 2;
            assert_eq!(*v, if ch == 0 { 0.5 } else { -2.0 });
        }
    }

    #[test]
    fn matches_naive_loops_for_even_and_odd_kernels() {
        let mut rng = Rng::new(5);
        for (kh, kw) in [(3, 3), (4, 4), (2, 3), (1, 1)] {
            for pad in [Padding::same(kh, kw), Padding::valid(), Padding::symmetric(1, 2)] {
                let x = Tensor::random_normal(&mut rng, &[2, 3, 6, 7], 0.0, 1.0).unwrap();
                let w = Tensor::random_normal(&mut rng, &[4, 3, kh, kw], 0.0, 1.0).unwrap();
                let p = params(w, vec![0.1, 0.2, 0.3, 0.4], pad);
                let fast = conv2d_forward(&x, &p).unwrap();
                let slow = naive_conv(&x, &p);
                assert_eq!(fast.shape(), slow.shape());
                for (a, b) in fast.data().iter().zip(slow.data()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn same_padding_preserves_extents_for_4x4() {
        let p = Padding::same(4, 4);
        assert_eq!((p.top, p.bottom, p.left, p.right), (1, 2, 1, 2));
        let x = Tensor::<f32>::ones(&[1, 2, 24, 32]);
        let conv = ConvParams { weight: Tensor::ones(&[3, 2, 4, 4]), bias: Tensor::zeros(&[3]), padding: p };
        assert_eq!(conv2d_forward(&x, &conv).unwrap().shape(), &[1, 3, 24, 32]);
        let deconv = ConvParams { weight: Tensor::ones(&[2, 3, 4, 4]), bias: Tensor::zeros(&[3]), padding: p };
        assert_eq!(deconv2d_forward(&x, &deconv).unwrap().shape(), &[1, 3, 24, 32]);
    }

    #[test]
    fn errors() {
        let x = Tensor::<f64>::ones(&[1, 2, 3, 3]);
        let p = params(Tensor::ones(&[1, 3, 3, 3]), vec![0.0], Padding::same(3, 3));
        assert_eq!(conv2d_forward(&x, &p).unwrap_err(), LayerError::ChannelMismatch { expected: 3, found: 2 });
        let p = params(Tensor::ones(&[1, 2, 4, 4]), vec![0.0], Padding::valid());
        assert!(matches!(conv2d_forward(&x, &p), Err(LayerError::EmptyOutput { .. })));
    }

    #[test]
    fn deconv_of_single_pixel_stamps_kernel() {
        let v = 2.5;
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![v]).unwrap();
        let k: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        let p = params(Tensor::from_vec(&[1, 1, 3, 3], k.clone()).unwrap(), vec![0.0], Padding::valid());
        let y = deconv2d_forward(&x, &p).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        for (a, b) in y.data().iter().zip(&k) {
            assert_eq!(*a, v * b);
        }
    }

    #[test]
    fn deconv_zero_input_is_bias_map() {
        let mut rng = Rng::new(2);
        let w = Tensor::random_normal(&mut rng, &[2, 3, 3, 3], 0.0, 1.0).unwrap();
        let p = params(w, vec![1.0, 2.0, 3.0], Padding::same(3, 3));
        let y = deconv2d_forward(&Tensor::zeros(&[1, 2, 4, 5]), &p).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            assert_eq!(*v, (i / 20 + 1) as f64);
        }
    }

    #[test]
    fn deconv_forward_is_conv_input_gradient() {
        let mut rng = Rng::new(8);
        for pad in [Padding::same(3, 3), Padding::same(4, 4)] {
            let (kh, kw) = (pad.top + pad.bottom + 1, pad.left + pad.right + 1);
            let w = Tensor::random_normal(&mut rng, &[3, 2, kh, kw], 0.0, 1.0).unwrap();
            let conv = params(w.clone(), vec![0.0; 3], pad);
            let deconv = params(w, vec![0.0; 2], pad);
            let x = Tensor::random_normal(&mut rng, &[2, 2, 5, 6], 0.0, 1.0).unwrap();
            let y = Tensor::random_normal(&mut rng, &[2, 3, 5, 6], 0.0, 1.0).unwrap();
            let via_backward = conv2d_backward(&x, &conv, &y).unwrap().input;
            let via_deconv = deconv2d_forward(&y, &deconv).unwrap();
            for (a, b) in via_backward.data().iter().zip(via_deconv.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
