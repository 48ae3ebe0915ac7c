//! Jaccard-distance loss, Adam, the epoch loop, k-fold splitting and
//! ensemble averaging.

mod adam;
mod ensemble;
mod kfold;
mod loss;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use ensemble::{ensemble_predict, ensemble_predict_maps};
pub use kfold::{kfold_split, Fold};
pub use loss::{jaccard_loss, jaccard_loss_grad, JaccardLossConfig};
pub use trainer::{evaluate_loss, train_fold, train_full, EpochLoss, LossCurve, Sample, TrainConfig};

use thiserror::Error;

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0}")]
    Invalid(String),
    #[error("gradient for `{name}` contains non-finite values")]
    NonFiniteGradient { name: String },
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("target must be binary, found {value} at index {index}")]
    NonBinaryTarget { index: usize, value: f64 },
    #[error("prediction must lie in [0, 1], found {value} at index {index}")]
    PredictionRange { index: usize, value: f64 },
    #[error("{0} set is empty")]
    EmptySet(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
