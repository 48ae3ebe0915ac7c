use super::{expect_shape, LayerError};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    y
}

/// Gradient through ReLU given its forward *output*.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    expect_shape(grad_out.shape(), output.shape())?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= T::zero() {
            *gv = T::zero();
        }
    }
    Ok(g)
}

/// Logistic function, clamped so outputs stay strictly inside `(0, 1)` at
/// the working precision.
pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let lo = T::epsilon();
    let hi = T::one() - T::epsilon();
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| {
        let s = if *v >= T::zero() {
            T::one() / (T::one() + (-*v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        };
        *v = s.max(lo).min(hi);
    });
    y
}

/// Gradient through the sigmoid given its forward output.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    expect_shape(grad_out.shape(), output.shape())?;
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv = *gv * y * (T::one() - y);
    }
    Ok(g)
}
