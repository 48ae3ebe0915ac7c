//! Architecture description, parameter state, network passes and weight
//! files.

mod arch;
mod io;
mod network;
mod state;

pub use arch::{
    build_cdnn29, build_cdnn29_scaled, count_parameters, Activation, ArchitectureSpec, LayerKind, LayerShape,
    LayerSpec, DROPOUT_RATE, INPUT_CHANNELS, INPUT_HEIGHT, INPUT_WIDTH,
};
pub use io::{load_model, save_model, RecordInfo, WeightFile, FORMAT_VERSION, MAGIC};
pub use network::{ForwardCache, Gradients};
pub use state::{init_model, init_model_with, ModelState, ParamLayer};

use thiserror::Error;

use crate::nn::LayerError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("input shape {found:?} does not match (batch, {expected:?})")]
    InputShape { expected: Vec<usize>, found: Vec<usize> },
    #[error("forward cache is missing, stale, or from another model")]
    StaleCache,
    #[error("weight file fingerprint {found:016x} does not match architecture {expected:016x}")]
    FingerprintMismatch { expected: u64, found: u64 },
    #[error("weight file is truncated")]
    Truncated,
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnknownVersion(u32),
    #[error("tensor `{name}` stored with dtype tag {found}, expected {expected}")]
    DtypeMismatch { name: String, expected: u8, found: u8 },
    #[error("tensor `{0}` missing from weight file")]
    MissingTensor(String),
    #[error("unexpected tensor `{0}` in weight file")]
    UnexpectedTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
