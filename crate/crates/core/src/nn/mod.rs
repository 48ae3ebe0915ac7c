//! Forward and backward passes for every layer kind of the network.
//!
//! Gradients are derived by hand per layer; there is no autodiff tape.
//! All functions take `(batch, channel, height, width)` tensors.

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, batchnorm_infer, BatchNormCache, BatchNormGrads, BatchNormParams};
pub use conv::{
    conv2d_backward, conv2d_forward, deconv2d_backward, deconv2d_forward, ConvGrads, ConvParams, Padding,
};
pub use dropout::{dropout, dropout_backward, DropoutParams};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, upsample2x2, upsample2x2_backward, PoolIndices};

use thiserror::Error;

use crate::tensor::TensorError;

/// Whether a pass is part of training or inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("channel mismatch: layer expects {expected} input channels, got {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("input {input:?} is too small for a {kernel:?} kernel")]
    EmptyOutput { input: Vec<usize>, kernel: (usize, usize) },
    #[error("2x2 pooling needs even spatial extents, got {shape:?}")]
    OddExtent { shape: Vec<usize> },
    #[error("batch normalization needs at least 2 samples per channel in train mode, got {count}")]
    TooFewSamples { count: usize },
    #[error("dropout rate must be in [0, 1), got {0}")]
    InvalidRate(f64),
}

pub(crate) fn expect_shape(found: &[usize], expected: &[usize]) -> Result<(), LayerError> {
    if found != expected {
        return Err(TensorError::ShapeMismatch { left: found.to_vec(), right: expected.to_vec() }.into());
    }
    Ok(())
}
