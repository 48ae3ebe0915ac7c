//! Dense row-major N-dimensional arrays.
//!
//! 4-D tensors follow the `(batch, channel, height, width)` convention
//! everywhere in the crate. The element type selects the precision mode:
//! `f32` for training, `f64` for gradient checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("operation `{op}` produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Arithmetic precision of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    /// 32-bit floats, used for training and inference.
    Train,
    /// 64-bit floats, used for finite-difference checks.
    Check,
}

/// Element types a [`Tensor`] may hold.
pub trait Scalar:
    Float + FromPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    const PRECISION: Precision;
    /// Tag written into weight files.
    const DTYPE_TAG: u8;
    const BYTES: usize;

    fn from_f64_lossy(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    /// `C <- alpha * A * B + beta * C` on strided row/column views.
    ///
    /// # Safety
    /// Every element addressed through the given dimensions and strides must
    /// lie inside the allocations behind the pointers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::Train;
    const DTYPE_TAG: u8 = 0;
    const BYTES: usize = 4;

    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::Check;
    const DTYPE_TAG: u8 = 1;
    const BYTES: usize = 8;

    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Elementwise binary operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Max,
    Mean,
}

/// Axes to reduce over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Axes {
    All,
    Set(Vec<usize>),
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const PREVIEW: usize = 8;
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &std::any::type_name::<T>())
            .field("data", &&self.data[..self.data.len().min(PREVIEW)])
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.contains(&0) {
        return Err(TensorError::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive".into(),
        });
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, TensorError> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(TensorError::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expected {n} elements, got {}", data.len()),
            });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Filled tensor. Panics on a zero extent; use [`Tensor::from_vec`] for
    /// untrusted shapes.
    pub fn full(shape: &[usize], value: T) -> Self {
        let n = check_shape(shape).expect("tensor extents must be positive");
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = check_shape(shape).expect("tensor extents must be positive");
        Self { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn precision(&self) -> Precision {
        T::PRECISION
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self, TensorError> {
        Self::from_vec(shape, self.data)
    }

    /// Extents of a rank-4 tensor as `(batch, channels, height, width)`.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), TensorError> {
        match *self.shape.as_slice() {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(TensorError::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected rank 4 (batch, channel, height, width)".into(),
            }),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn finite_or(self, op: &'static str) -> Result<Self, TensorError> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(TensorError::NonFinite { op })
        }
    }

    pub fn binary(&self, op: BinaryOp, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        let f: fn(T, T) -> T = match op {
            BinaryOp::Add => |a, b| a + b,
            BinaryOp::Sub => |a, b| a - b,
            BinaryOp::Mul => |a, b| a * b,
        };
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        let name = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        };
        Tensor { shape: self.shape.clone(), data }.finite_or(name)
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn scale(&self, s: T) -> Result<Tensor<T>, TensorError> {
        self.map(|v| v * s)
    }

    pub fn add_scalar(&self, s: T) -> Result<Tensor<T>, TensorError> {
        self.map(|v| v + s)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Tensor<T>, TensorError> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
            .finite_or("map")
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Tensor<T>) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor<T>) -> Result<T, TensorError> {
        Ok(self.mul(other)?.sum_all())
    }

    /// Sum of all elements by pairwise summation over row-major order.
    ///
    /// Leaves of up to 32 elements are summed sequentially, so results are
    /// reproducible bit-for-bit for a given shape.
    pub fn sum_all(&self) -> T {
        pairwise_sum(&self.data)
    }

    pub fn max_all(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn mean_all(&self) -> T {
        self.sum_all() / T::from_usize(self.len()).expect("length fits")
    }

    /// Reduce over `axes`. Reduced extents are removed unless `keep_dims`,
    /// in which case they are kept as 1. Reducing every axis without
    /// `keep_dims` yields a shape-`[1]` tensor.
    pub fn reduce(&self, op: ReduceOp, axes: &Axes, keep_dims: bool) -> Result<Tensor<T>, TensorError> {
        let rank = self.rank();
        let mut reduced = vec![false; rank];
        match axes {
            Axes::All => reduced.iter_mut().for_each(|r| *r = true),
            Axes::Set(list) => {
                for &axis in list {
                    if axis >= rank {
                        return Err(TensorError::InvalidAxis { axis, rank });
                    }
                    reduced[axis] = true;
                }
            }
        }

        if reduced.iter().all(|&r| r) {
            let v = match op {
                ReduceOp::Sum => self.sum_all(),
                ReduceOp::Max => self.max_all(),
                ReduceOp::Mean => self.mean_all(),
            };
            let shape = if keep_dims { vec![1; rank] } else { vec![1] };
            return Tensor::from_vec(&shape, vec![v]);
        }

        let kept_shape: Vec<usize> = self
            .shape
            .iter()
            .zip(&reduced)
            .map(|(&e, &r)| if r { 1 } else { e })
            .collect();
        let out_len: usize = kept_shape.iter().product();
        let init = match op {
            ReduceOp::Max => T::neg_infinity(),
            _ => T::zero(),
        };
        let mut out = vec![init; out_len];
        let out_strides = strides(&kept_shape);
        let mut index = vec![0usize; rank];
        for &v in &self.data {
            let o: usize = index
                .iter()
                .zip(&reduced)
                .zip(&out_strides)
                .map(|((&i, &r), &s)| if r { 0 } else { i * s })
                .sum();
            out[o] = match op {
                ReduceOp::Max => out[o].max(v),
                _ => out[o] + v,
            };
            // Row-major odometer increment.
            for d in (0..rank).rev() {
                index[d] += 1;
                if index[d] < self.shape[d] {
                    break;
                }
                index[d] = 0;
            }
        }
        if op == ReduceOp::Mean {
            let count = T::from_usize(self.len() / out_len).expect("count fits");
            out.iter_mut().for_each(|v| *v = *v / count);
        }
        let shape = if keep_dims {
            kept_shape
        } else {
            let s: Vec<usize> = self
                .shape
                .iter()
                .zip(&reduced)
                .filter(|(_, &r)| !r)
                .map(|(&e, _)| e)
                .collect();
            s
        };
        Tensor::from_vec(&shape, out)
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform(rng: &mut Rng, shape: &[usize], lo: T, hi: T) -> Result<Tensor<T>, TensorError> {
        if !(lo < hi) {
            return Err(TensorError::InvalidArgument(format!("need lo < hi, got [{lo}, {hi})")));
        }
        let n = check_shape(shape)?;
        let (lo64, hi64) = (lo.as_f64(), hi.as_f64());
        let data = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let v = T::from_f64_lossy(lo64 + (hi64 - lo64) * u);
                // Rounding into f32 can land exactly on `hi`.
                if v >= hi { lo } else { v }
            })
            .collect();
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn random_normal(rng: &mut Rng, shape: &[usize], mean: T, std: T) -> Result<Tensor<T>, TensorError> {
        if !(std >= T::zero()) {
            return Err(TensorError::InvalidArgument(format!("std must be non-negative, got {std}")));
        }
        let n = check_shape(shape)?;
        let (m, s) = (mean.as_f64(), std.as_f64());
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::from_f64_lossy(m + s * z)
            })
            .collect();
        Ok(Tensor { shape: shape.to_vec(), data })
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

pub(crate) fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().fold(T::zero(), |acc, &v| acc + v)
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(t(&[2], &[1., 2.]).add(&t(&[2], &[3., 4.])).unwrap().data(), &[4., 6.]);
        assert_eq!(t(&[2], &[1., 2.]).scale(0.0).unwrap().data(), &[0., 0.]);
        assert_eq!(t(&[2], &[2., 3.]).mul(&t(&[2], &[4., 5.])).unwrap().data(), &[8., 15.]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let err = t(&[2], &[1., 2.]).add(&t(&[1, 2], &[1., 2.])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2]") && msg.contains("[1, 2]"), "{msg}");
    }

    #[test]
    fn non_finite_results_error() {
        let big = t(&[1], &[f64::MAX]);
        assert!(matches!(big.add(&big), Err(TensorError::NonFinite { op: "add" })));
        assert!(t(&[1], &[-1.0]).map(f64::ln).is_err());
    }

    #[test]
    fn reduce_examples() {
        let m = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(m.reduce(ReduceOp::Sum, &Axes::All, false).unwrap().data(), &[10.]);
        assert_eq!(t(&[3], &[-1., 0., 5.]).reduce(ReduceOp::Max, &Axes::All, false).unwrap().data(), &[5.]);
        assert_eq!(Tensor::<f64>::ones(&[4]).reduce(ReduceOp::Mean, &Axes::All, false).unwrap().data(), &[1.]);

        let rows = m.reduce(ReduceOp::Sum, &Axes::Set(vec![1]), false).unwrap();
        assert_eq!(rows.shape(), &[2]);
        assert_eq!(rows.data(), &[3., 7.]);
        let cols = m.reduce(ReduceOp::Max, &Axes::Set(vec![0]), true).unwrap();
        assert_eq!(cols.shape(), &[1, 2]);
        assert_eq!(cols.data(), &[3., 4.]);
    }

    #[test]
    fn reduce_rejects_bad_axis() {
        let m = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(
            m.reduce(ReduceOp::Sum, &Axes::Set(vec![2]), false).unwrap_err(),
            TensorError::InvalidAxis { axis: 2, rank: 2 }
        );
    }

    #[test]
    fn sum_of_ones_is_element_count() {
        let ones = Tensor::<f32>::ones(&[3, 5, 7]);
        assert_eq!(ones.sum_all(), 105.0);
    }

    #[test]
    fn pairwise_and_sequential_sums_agree() {
        let mut rng = Rng::new(3);
        let x = Tensor::<f64>::random_uniform(&mut rng, &[10_000], -1.0, 1.0).unwrap();
        let seq: f64 = x.data().iter().fold(0.0, |a, &v| a + v);
        let abs: f64 = x.data().iter().map(|v| v.abs()).sum();
        assert!((x.sum_all() - seq).abs() <= 1e-12 * abs);
    }

    #[test]
    fn random_is_reproducible() {
        let a = Tensor::<f32>::random_uniform(&mut Rng::new(7), &[2], 0.0, 1.0).unwrap();
        let b = Tensor::<f32>::random_uniform(&mut Rng::new(7), &[2], 0.0, 1.0).unwrap();
        assert_eq!(a, b);
        let z = Tensor::<f64>::random_normal(&mut Rng::new(1), &[16], 0.0, 0.0).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_mean_and_range() {
        let u = Tensor::<f64>::random_uniform(&mut Rng::new(11), &[10_000], 0.0, 1.0).unwrap();
        let mean = u.mean_all();
        assert!((0.45..=0.55).contains(&mean), "{mean}");
        assert!(u.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn random_rejects_bad_arguments() {
        let mut rng = Rng::new(0);
        assert!(Tensor::<f64>::random_uniform(&mut rng, &[0, 2], 0.0, 1.0).is_err());
        assert!(Tensor::<f64>::random_uniform(&mut rng, &[2], 1.0, 1.0).is_err());
        assert!(Tensor::<f64>::random_normal(&mut rng, &[2], 0.0, -1.0).is_err());
    }
}
