use super::{expect_shape, LayerError};
use crate::tensor::{Scalar, Tensor};

/// Flat input positions selected by a 2x2 max-pool, one per output element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// 2x2 max-pooling with stride 2. Ties go to the first position in
/// row-major order within the window.
pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices), LayerError> {
    let (b, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(LayerError::OddExtent { shape: x.shape().to_vec() });
    }
    let (oh, ow) = (h / 2, w / 2);
    let xs = x.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let top = base + 2 * y * w + 2 * xx;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if xs[cand] > xs[best] {
                        best = cand;
                    }
                }
                out.push(xs[best]);
                argmax.push(best);
            }
        }
    }
    let output_shape = vec![b, c, oh, ow];
    let y = Tensor::from_vec(&output_shape, out)?;
    Ok((y, PoolIndices { input_shape: x.shape().to_vec(), output_shape, argmax }))
}

/// Routes each output gradient to its recorded argmax; zero elsewhere.
pub fn maxpool2x2_backward<T: Scalar>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    expect_shape(grad_out.shape(), &indices.output_shape)?;
    let mut grad = Tensor::zeros(&indices.input_shape);
    let gx = grad.data_mut();
    for (&pos, &g) in indices.argmax.iter().zip(grad_out.data()) {
        gx[pos] = gx[pos] + g;
    }
    Ok(grad)
}

/// Nearest-neighbour 2x upsampling (each value repeated over a 2x2 block).
pub fn upsample2x2<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let (b, c, h, w) = x.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    let xs = x.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        for y in 0..oh {
            let row = &xs[plane * h * w + (y / 2) * w..plane * h * w + (y / 2 + 1) * w];
            for &v in row {
                out.push(v);
                out.push(v);
            }
        }
    }
    Ok(Tensor::from_vec(&[b, c, oh, ow], out)?)
}

/// Adjoint of [`upsample2x2`]: sums each 2x2 block of the gradient.
pub fn upsample2x2_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let (b, c, oh, ow) = grad_out.dims4()?;
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(LayerError::OddExtent { shape: grad_out.shape().to_vec() });
    }
    let (h, w) = (oh / 2, ow / 2);
    let gs = grad_out.data();
    let mut out = vec![T::zero(); b * c * h * w];
    for plane in 0..b * c {
        for y in 0..oh {
            for xx in 0..ow {
                let o = plane * h * w + (y / 2) * w + xx / 2;
                out[o] = out[o] + gs[(plane * oh + y) * ow + xx];
            }
        }
    }
    Ok(Tensor::from_vec(&[b, c, h, w], out)?)
}
