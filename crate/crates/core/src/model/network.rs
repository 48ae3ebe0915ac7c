//! Whole-network forward and backward passes.

use super::arch::{Activation, LayerKind};
use super::state::ModelState;
use super::ModelError;
use crate::nn::{self, BatchNormCache, DropoutParams, Mode, PoolIndices};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

enum StepCache<T> {
    Param { bn: Option<BatchNormCache<T>> },
    Pool(PoolIndices),
    Upsample,
    Dropout(Option<Tensor<T>>),
}

/// Activations saved by a train-mode forward pass.
pub struct ForwardCache<T> {
    fingerprint: u64,
    revision: u64,
    /// `activations[i]` is the input of layer `i`; the last entry is the
    /// probability map.
    activations: Vec<Tensor<T>>,
    steps: Vec<StepCache<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("cache holds the output")
    }
}

/// One gradient per trainable tensor, in [`ModelState::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelState<T> {
    fn check_input(&self, x: &Tensor<T>) -> Result<(), ModelError> {
        let spec = self.spec();
        let expected = [spec.input_channels, spec.input_height, spec.input_width];
        match x.shape() {
            [b, rest @ ..] if *b >= 1 && rest == expected => Ok(()),
            found => Err(ModelError::InputShape { expected: expected.to_vec(), found: found.to_vec() }),
        }
    }

    /// Probability map `(B, 1, H, W)` for input `(B, C, H, W)`. In train mode
    /// batch statistics are used, running statistics are updated, dropout is
    /// active, and a cache for [`ModelState::backward`] is returned.
    pub fn forward(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor<T>, Option<ForwardCache<T>>), ModelError> {
        if mode == Mode::Infer {
            return Ok((self.predict(x)?, None));
        }
        self.check_input(x)?;
        let fingerprint = self.fingerprint();
        let revision = self.revision();
        let spec_layers = self.spec().layers.clone();
        // Running statistics are not trainable, so updating them leaves the
        // revision alone.
        let params = self.layers_for_forward();

        let mut activations = Vec::with_capacity(spec_layers.len() + 1);
        let mut steps = Vec::with_capacity(spec_layers.len());
        let mut cur = x.clone();
        let mut pi = 0;
        for layer in &spec_layers {
            let (next, step) = match layer.kind {
                LayerKind::Conv | LayerKind::Deconv | LayerKind::Output => {
                    let p = &mut params[pi];
                    pi += 1;
                    let mut y = if layer.kind == LayerKind::Deconv {
                        nn::deconv2d_forward(&cur, &p.conv)?
                    } else {
                        nn::conv2d_forward(&cur, &p.conv)?
                    };
                    let mut bn_cache = None;
                    if let Some(bn) = p.bn.as_mut() {
                        let (z, c) = nn::batchnorm_forward(&y, bn, Mode::Train)?;
                        y = z;
                        bn_cache = c;
                    }
                    (activate(y, layer.activation), StepCache::Param { bn: bn_cache })
                }
                LayerKind::MaxPool => {
                    let (y, idx) = nn::maxpool2x2_forward(&cur)?;
                    (y, StepCache::Pool(idx))
                }
                LayerKind::Upsample => (nn::upsample2x2(&cur)?, StepCache::Upsample),
                LayerKind::Dropout => {
                    let p = DropoutParams { rate: layer.dropout_rate, mode: Mode::Train };
                    let (y, mask) = nn::dropout(&cur, &p, rng)?;
                    (y, StepCache::Dropout(mask))
                }
            };
            activations.push(std::mem::replace(&mut cur, next));
            steps.push(step);
        }
        activations.push(cur.clone());
        Ok((cur, Some(ForwardCache { fingerprint, revision, activations, steps })))
    }

    /// Inference-mode forward pass: running statistics, no dropout, no
    /// state changes. Each image is processed independently.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        self.check_input(x)?;
        let params = self.layers();
        let mut cur = x.clone();
        let mut pi = 0;
        for layer in &self.spec().layers {
            cur = match layer.kind {
                LayerKind::Conv | LayerKind::Deconv | LayerKind::Output => {
                    let p = &params[pi];
                    pi += 1;
                    let mut y = if layer.kind == LayerKind::Deconv {
                        nn::deconv2d_forward(&cur, &p.conv)?
                    } else {
                        nn::conv2d_forward(&cur, &p.conv)?
                    };
                    if let Some(bn) = &p.bn {
                        y = nn::batchnorm_infer(&y, bn)?;
                    }
                    activate(y, layer.activation)
                }
                LayerKind::MaxPool => nn::maxpool2x2_forward(&cur)?.0,
                LayerKind::Upsample => nn::upsample2x2(&cur)?,
                LayerKind::Dropout => cur,
            };
        }
        Ok(cur)
    }

    /// Gradients of a scalar loss with respect to every trainable tensor,
    /// given the loss gradient with respect to the probability map.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_output: &Tensor<T>) -> Result<Gradients<T>, ModelError> {
        if cache.fingerprint != self.fingerprint() || cache.revision != self.revision() {
            return Err(ModelError::StaleCache);
        }
        if grad_output.shape() != cache.output().shape() {
            return Err(ModelError::InputShape {
                expected: cache.output().shape().to_vec(),
                found: grad_output.shape().to_vec(),
            });
        }
        let spec_layers = &self.spec().layers;
        let params = self.layers();
        let mut pi = params.len();
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(params.len());
        let mut g = grad_output.clone();

        for (i, layer) in spec_layers.iter().enumerate().rev() {
            g = match &cache.steps[i] {
                StepCache::Param { bn } => {
                    pi -= 1;
                    let p = &params[pi];
                    let out = &cache.activations[i + 1];
                    let mut g = match layer.activation {
                        Activation::Relu => nn::relu_backward(out, &g)?,
                        Activation::Sigmoid => nn::sigmoid_backward(out, &g)?,
                        Activation::None => g,
                    };
                    let mut bn_grads = None;
                    if let (Some(bn_cache), Some(bn_params)) = (bn, &p.bn) {
                        let bg = nn::batchnorm_backward(bn_cache, bn_params, &g)?;
                        g = bg.input;
                        bn_grads = Some((bg.gamma, bg.beta));
                    }
                    let input = &cache.activations[i];
                    let cg = if layer.kind == LayerKind::Deconv {
                        nn::deconv2d_backward(input, &p.conv, &g)?
                    } else {
                        nn::conv2d_backward(input, &p.conv, &g)?
                    };
                    let mut grads = vec![cg.weight, cg.bias];
                    if let Some((gamma, beta)) = bn_grads {
                        grads.push(gamma);
                        grads.push(beta);
                    }
                    per_layer.push(grads);
                    cg.input
                }
                StepCache::Pool(idx) => nn::maxpool2x2_backward(idx, &g)?,
                StepCache::Upsample => nn::upsample2x2_backward(&g)?,
                StepCache::Dropout(Some(mask)) => nn::dropout_backward(mask, &g)?,
                StepCache::Dropout(None) => g,
            };
        }

        let tensors: Vec<Tensor<T>> = per_layer.into_iter().rev().flatten().collect();
        let names: Vec<String> = self.trainable().into_iter().map(|(n, _)| n).collect();
        debug_assert_eq!(names.len(), tensors.len());
        Ok(Gradients { names, tensors })
    }
}

fn activate<T: Scalar>(y: Tensor<T>, activation: Activation) -> Tensor<T> {
    match activation {
        Activation::Relu => nn::relu(&y),
        Activation::Sigmoid => nn::sigmoid(&y),
        Activation::None => y,
    }
}
