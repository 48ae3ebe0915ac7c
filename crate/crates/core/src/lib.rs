//! Convolutional-deconvolutional segmentation of skin lesions in
//! dermoscopic images, implemented from scratch on CPU.
//!
//! The pipeline: decode an RGB image, resize it to 192 x 256 and stack
//! RGB, HSV and CIELAB lightness into a seven-channel input
//! ([`pipeline`]); run the 29-layer encoder-decoder network ([`model`]);
//! average the probability maps of several trained models
//! ([`train::ensemble_predict`]); convert the average to a single lesion
//! mask with dual thresholds ([`postprocess`]); score it ([`eval`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a < b)` also rejects NaN.

pub mod dataset;
pub mod eval;
mod linalg;
pub mod mask;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use mask::{BinaryMask, ProbabilityMap};
pub use rng::Rng;
pub use tensor::{Axes, Precision, ReduceOp, Scalar, Tensor, TensorError};
