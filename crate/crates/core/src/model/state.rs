use super::arch::{count_parameters, ArchitectureSpec, LayerKind};
use super::ModelError;
use crate::nn::{BatchNormParams, ConvParams, Padding};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};
use crate::train::{AdamConfig, AdamState};

/// Parameters of one convolution-like layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayer<T> {
    pub name: String,
    pub kind: LayerKind,
    pub conv: ConvParams<T>,
    pub bn: Option<BatchNormParams<T>>,
}

/// All trainable parameters, batch-norm running statistics and optimizer
/// moments of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    spec: ArchitectureSpec,
    fingerprint: u64,
    layers: Vec<ParamLayer<T>>,
    pub optimizer: AdamState<T>,
    /// Incremented whenever trainable parameters change.
    revision: u64,
}

impl<T: Scalar> ModelState<T> {
    pub(crate) fn from_parts(spec: ArchitectureSpec, layers: Vec<ParamLayer<T>>, optimizer: AdamState<T>) -> Self {
        let fingerprint = spec.fingerprint();
        Self { spec, fingerprint, layers, optimizer, revision: 0 }
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn layers(&self) -> &[ParamLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ParamLayer<T>] {
        self.revision += 1;
        &mut self.layers
    }

    /// Mutable access for train-mode forward passes, which only touch
    /// running statistics.
    pub(crate) fn layers_for_forward(&mut self) -> &mut [ParamLayer<T>] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&ParamLayer<T>> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Trainable tensors in canonical order: per layer weight, bias, then
    /// batch-norm gamma and beta.
    pub fn trainable(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push((format!("{}.weight", l.name), &l.conv.weight));
            out.push((format!("{}.bias", l.name), &l.conv.bias));
            if let Some(bn) = &l.bn {
                out.push((format!("{}.bn.gamma", l.name), &bn.gamma));
                out.push((format!("{}.bn.beta", l.name), &bn.beta));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|(_, t)| t.len()).sum()
    }

    /// Applies one optimizer step with gradients in [`ModelState::trainable`]
    /// order.
    pub fn apply_gradients(&mut self, grads: &[Tensor<T>]) -> Result<(), crate::train::TrainError> {
        let mut params: Vec<&mut Tensor<T>> = Vec::new();
        for l in &mut self.layers {
            params.push(&mut l.conv.weight);
            params.push(&mut l.conv.bias);
            if let Some(bn) = &mut l.bn {
                params.push(&mut bn.gamma);
                params.push(&mut bn.beta);
            }
        }
        self.optimizer.step(&mut params, grads)?;
        self.revision += 1;
        Ok(())
    }
}

/// Fresh state: He-normal weights (std `sqrt(2 / fan_in)`, `fan_in` =
/// input channels x kernel area), zero biases, unit gamma, zero beta,
/// running statistics (0, 1), zeroed optimizer moments.
pub fn init_model<T: Scalar>(spec: &ArchitectureSpec, rng: &mut Rng) -> Result<ModelState<T>, ModelError> {
    init_model_with(spec, rng, AdamConfig::default())
}

pub fn init_model_with<T: Scalar>(
    spec: &ArchitectureSpec,
    rng: &mut Rng,
    adam: AdamConfig,
) -> Result<ModelState<T>, ModelError> {
    let mut state = skeleton(spec, adam)?;
    for (layer, cin) in state.layers.iter_mut().zip(param_input_channels(spec)) {
        let w = &mut layer.conv.weight;
        let (kh, kw) = (w.shape()[2], w.shape()[3]);
        let std = (2.0 / (cin * kh * kw) as f64).sqrt();
        *w = Tensor::random_normal(rng, w.shape(), T::zero(), T::from_f64_lossy(std))?;
    }
    debug_assert_eq!(state.parameter_count(), count_parameters(spec));
    Ok(state)
}

fn param_input_channels(spec: &ArchitectureSpec) -> Vec<usize> {
    spec.layers
        .iter()
        .zip(spec.input_channels_per_layer())
        .filter(|(l, _)| l.kind.has_params())
        .map(|(_, c)| c)
        .collect()
}

/// Correctly shaped state with zero weights.
pub(crate) fn skeleton<T: Scalar>(spec: &ArchitectureSpec, adam: AdamConfig) -> Result<ModelState<T>, ModelError> {
    spec.validate()?;
    let mut layers = Vec::new();
    for (l, cin) in spec.layers.iter().zip(spec.input_channels_per_layer()) {
        if !l.kind.has_params() {
            continue;
        }
        let (kh, kw) = l.kernel;
        let shape = match l.kind {
            LayerKind::Deconv => [cin, l.features, kh, kw],
            _ => [l.features, cin, kh, kw],
        };
        layers.push(ParamLayer {
            name: l.name.clone(),
            kind: l.kind,
            conv: ConvParams {
                weight: Tensor::zeros(&shape),
                bias: Tensor::zeros(&[l.features]),
                padding: Padding::same(kh, kw),
            },
            bn: l.batchnorm.then(|| BatchNormParams::new(l.features)),
        });
    }
    let mut state = ModelState::from_parts(spec.clone(), layers, AdamState::new(adam, std::iter::empty()));
    let shapes: Vec<(String, Vec<usize>)> =
        state.trainable().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    state.optimizer = AdamState::new(adam, shapes.iter().map(|(n, s)| (n.clone(), s.as_slice())));
    Ok(state)
}
