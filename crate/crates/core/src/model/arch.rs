//! Declarative layer lists and the CDNN-29 layout.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;

pub const INPUT_CHANNELS: usize = 7;
pub const INPUT_HEIGHT: usize = 192;
pub const INPUT_WIDTH: usize = 256;
pub const DROPOUT_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    Deconv,
    MaxPool,
    Upsample,
    Dropout,
    /// Final convolution producing the probability map.
    Output,
}

impl LayerKind {
    pub fn has_params(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Deconv | LayerKind::Output)
    }

    fn tag(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Deconv => "deconv",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Upsample => "upsample",
            LayerKind::Dropout => "dropout",
            LayerKind::Output => "output",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Filter extents; `(2, 2)` for pooling/upsampling, `(0, 0)` for dropout.
    pub kernel: (usize, usize),
    /// Output feature count.
    pub features: usize,
    pub activation: Activation,
    pub batchnorm: bool,
    /// Drop probability for dropout entries; zero otherwise.
    pub dropout_rate: f64,
}

impl LayerSpec {
    /// Convolution with batch normalization and ReLU.
    pub fn conv(name: &str, k: usize, features: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Conv,
            kernel: (k, k),
            features,
            activation: Activation::Relu,
            batchnorm: true,
            dropout_rate: 0.0,
        }
    }

    /// Transposed convolution with batch normalization and ReLU.
    pub fn deconv(name: &str, k: usize, features: usize) -> Self {
        Self { kind: LayerKind::Deconv, ..Self::conv(name, k, features) }
    }

    pub fn maxpool(name: &str, features: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::MaxPool,
            kernel: (2, 2),
            features,
            activation: Activation::None,
            batchnorm: false,
            dropout_rate: 0.0,
        }
    }

    pub fn upsample(name: &str, features: usize) -> Self {
        Self { kind: LayerKind::Upsample, ..Self::maxpool(name, features) }
    }

    pub fn dropout(name: &str, features: usize, rate: f64) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Dropout,
            kernel: (0, 0),
            features,
            activation: Activation::None,
            batchnorm: false,
            dropout_rate: rate,
        }
    }

    /// Sigmoid-activated convolution without batch normalization.
    pub fn output(name: &str, k: usize, features: usize) -> Self {
        Self {
            kind: LayerKind::Output,
            activation: Activation::Sigmoid,
            batchnorm: false,
            ..Self::conv(name, k, features)
        }
    }
}

/// Output extents of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    /// Checks channel chaining and spatial bookkeeping; returns the output
    /// extents of every layer.
    pub fn validate(&self) -> Result<Vec<LayerShape>, ModelError> {
        let invalid = |msg: String| Err(ModelError::InvalidArchitecture(msg));
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return invalid("input extents must be positive".into());
        }
        if self.layers.is_empty() {
            return invalid("no layers".into());
        }
        let mut names = std::collections::HashSet::new();
        let mut cur = LayerShape { channels: self.input_channels, height: self.input_height, width: self.input_width };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if !names.insert(layer.name.as_str()) {
                return invalid(format!("duplicate layer name `{}`", layer.name));
            }
            match layer.kind {
                LayerKind::Conv | LayerKind::Deconv | LayerKind::Output => {
                    if layer.kernel.0 == 0 || layer.kernel.1 == 0 || layer.features == 0 {
                        return invalid(format!("`{}` needs a positive kernel and feature count", layer.name));
                    }
                    if layer.kind == LayerKind::Output && i + 1 != self.layers.len() {
                        return invalid(format!("output layer `{}` must be last", layer.name));
                    }
                    cur.channels = layer.features;
                }
                LayerKind::MaxPool | LayerKind::Upsample | LayerKind::Dropout => {
                    if layer.features != cur.channels {
                        return invalid(format!(
                            "`{}` lists {} features but receives {}",
                            layer.name, layer.features, cur.channels
                        ));
                    }
                    match layer.kind {
                        LayerKind::MaxPool => {
                            if !cur.height.is_multiple_of(2) || !cur.width.is_multiple_of(2) {
                                return invalid(format!(
                                    "`{}` pools odd extents {}x{}",
                                    layer.name, cur.height, cur.width
                                ));
                            }
                            cur.height /= 2;
                            cur.width /= 2;
                        }
                        LayerKind::Upsample => {
                            cur.height *= 2;
                            cur.width *= 2;
                        }
                        _ => {
                            if !(0.0..1.0).contains(&layer.dropout_rate) {
                                return invalid(format!("`{}` has dropout rate {}", layer.name, layer.dropout_rate));
                            }
                        }
                    }
                }
            }
            shapes.push(cur);
        }
        let last = self.layers.last().expect("non-empty");
        if last.kind != LayerKind::Output || cur.channels != 1 {
            return invalid("the last layer must be a 1-feature output layer".into());
        }
        if cur.height != self.input_height || cur.width != self.input_width {
            return invalid(format!(
                "output extents {}x{} differ from input {}x{}",
                cur.height, cur.width, self.input_height, self.input_width
            ));
        }
        Ok(shapes)
    }

    /// Input channel count of each layer, chained from the input.
    pub fn input_channels_per_layer(&self) -> Vec<usize> {
        let mut c = self.input_channels;
        self.layers
            .iter()
            .map(|l| {
                let input = c;
                if l.kind.has_params() {
                    c = l.features;
                }
                input
            })
            .collect()
    }

    /// Stable 64-bit digest of the layer list and input extents.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(format!("in:{}x{}x{};", self.input_channels, self.input_height, self.input_width));
        for l in &self.layers {
            hasher.update(format!(
                "{}|{}|{}x{}|{}|{:?}|{}|{};",
                l.name,
                l.kind.tag(),
                l.kernel.0,
                l.kernel.1,
                l.features,
                l.activation,
                l.batchnorm,
                l.dropout_rate.to_bits()
            ));
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        (1, self.input_height, self.input_width)
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:<9} {:>7} {:>8}  output", "layer", "kind", "filter", "features")?;
        writeln!(f, "{:<10} {:<9} {:>7} {:>8}  {}x{}x{}", "input", "-", "-", self.input_channels, self.input_height, self.input_width, self.input_channels)?;
        let shapes = self.validate().ok();
        for (i, l) in self.layers.iter().enumerate() {
            let filter = match l.kind {
                LayerKind::Dropout => format!("p={}", l.dropout_rate),
                _ => format!("{}x{}", l.kernel.0, l.kernel.1),
            };
            let out = shapes
                .as_ref()
                .map(|s| format!("{}x{}x{}", s[i].height, s[i].width, s[i].channels))
                .unwrap_or_default();
            writeln!(f, "{:<10} {:<9} {:>7} {:>8}  {}", l.name, l.kind.tag(), filter, l.features, out)?;
        }
        Ok(())
    }
}

/// Trainable parameter count: weights, biases, and batch-norm scale/shift.
/// Running statistics are not trainable and are excluded.
pub fn count_parameters(spec: &ArchitectureSpec) -> usize {
    spec.layers
        .iter()
        .zip(spec.input_channels_per_layer())
        .filter(|(l, _)| l.kind.has_params())
        .map(|(l, cin)| {
            let weights = cin * l.features * l.kernel.0 * l.kernel.1;
            let bn = if l.batchnorm { 2 * l.features } else { 0 };
            weights + l.features + bn
        })
        .sum()
}

/// The 29-layer convolutional-deconvolutional network for 192x256x7 input.
pub fn build_cdnn29() -> ArchitectureSpec {
    build_cdnn29_scaled(1)
}

/// CDNN-29 with every feature count divided by `divisor` (at least one
/// feature per layer; the output layer keeps its single feature).
pub fn build_cdnn29_scaled(divisor: usize) -> ArchitectureSpec {
    let d = divisor.max(1);
    let f = |n: usize| (n / d).max(1);
    let layers = vec![
        LayerSpec::conv("conv-1-1", 3, f(16)),
        LayerSpec::conv("conv-1-2", 3, f(32)),
        LayerSpec::maxpool("pool-1", f(32)),
        LayerSpec::conv("conv-2-1", 3, f(64)),
        LayerSpec::conv("conv-2-2", 3, f(64)),
        LayerSpec::maxpool("pool-2", f(64)),
        LayerSpec::conv("conv-3-1", 3, f(128)),
        LayerSpec::conv("conv-3-2", 4, f(128)),
        LayerSpec::maxpool("pool-3", f(128)),
        LayerSpec::dropout("drop-1", f(128), DROPOUT_RATE),
        LayerSpec::conv("conv-4-1", 3, f(256)),
        LayerSpec::conv("conv-4-2", 3, f(256)),
        LayerSpec::maxpool("pool-4", f(256)),
        LayerSpec::conv("conv-5", 3, f(512)),
        LayerSpec::deconv("decv-1", 3, f(256)),
        LayerSpec::upsample("ups-1", f(256)),
        LayerSpec::deconv("decv-2-1", 3, f(256)),
        LayerSpec::deconv("decv-2-2", 3, f(128)),
        LayerSpec::upsample("ups-2", f(128)),
        LayerSpec::deconv("decv-3-1", 4, f(128)),
        LayerSpec::deconv("decv-3-2", 3, f(128)),
        LayerSpec::upsample("ups-3", f(128)),
        LayerSpec::deconv("decv-4-1", 3, f(64)),
        LayerSpec::deconv("decv-4-2", 3, f(32)),
        LayerSpec::upsample("ups-4", f(32)),
        LayerSpec::dropout("drop-2", f(32), DROPOUT_RATE),
        LayerSpec::deconv("decv-5-1", 3, f(16)),
        LayerSpec::output("output", 3, 1),
    ];
    ArchitectureSpec { input_channels: INPUT_CHANNELS, input_height: INPUT_HEIGHT, input_width: INPUT_WIDTH, layers }
}
