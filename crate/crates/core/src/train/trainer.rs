use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{jaccard_loss, jaccard_loss_grad, JaccardLossConfig};
use super::TrainError;
use crate::model::ModelState;
use crate::nn::Mode;
use crate::pipeline::{augment_contrast, augment_geometric, normalize_contrast, AugmentationConfig, DEFAULT_WINDOW};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// One training example: a composed `(C, H, W)` input before contrast
/// normalization and its binary `(1, H, W)` mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub id: String,
    pub input: Tensor<T>,
    pub mask: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Full passes over the training set.
    pub epochs: usize,
    pub lr: f64,
    pub folds: usize,
    pub seed: u64,
    pub loss: JaccardLossConfig,
    /// Random flips, shifts, rotations and scaling per sample.
    pub augment_geometric: bool,
    /// Random per-channel contrast windows; when off, the fixed default
    /// window is used.
    pub augment_contrast: bool,
    pub augmentation: AugmentationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 18,
            epochs: 600,
            lr: 0.003,
            folds: 5,
            seed: 0,
            loss: JaccardLossConfig::default(),
            augment_geometric: true,
            augment_contrast: true,
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_len: usize) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Invalid(m));
        if self.batch_size == 0 || self.epochs == 0 || self.folds == 0 {
            return bad("batch_size, epochs and folds must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.loss.smooth >= 0.0) {
            return bad(format!("loss smoothing must be non-negative, got {}", self.loss.smooth));
        }
        if self.batch_size > train_len {
            return bad(format!("batch_size {} exceeds the {train_len} training samples", self.batch_size));
        }
        self.augmentation.validate().map_err(|e| TrainError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub epochs: Vec<EpochLoss>,
}

impl LossCurve {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }

    /// `epoch,train_loss,val_loss`; the validation column is empty when no
    /// validation set was used.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:.8}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.8},{val}", e.epoch, e.train_loss);
        }
        out
    }
}

// Random stream ids. Each (epoch, purpose, index) gets its own generator so
// results do not depend on thread scheduling.
const SHUFFLE: u64 = 0;
const AUGMENT: u64 = 1;
const DROPOUT: u64 = 2;

fn stream(epoch: usize, purpose: u64, index: usize) -> u64 {
    ((epoch as u64) << 34) | (purpose << 32) | index as u64
}

fn check_samples<T: Scalar>(model: &ModelState<T>, samples: &[Sample<T>], what: &'static str) -> Result<(), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySet(what));
    }
    let spec = model.spec();
    let want = [spec.input_channels, spec.input_height, spec.input_width];
    for s in samples {
        if s.input.shape() != want || s.mask.shape() != [1, want[1], want[2]] {
            return Err(TrainError::Invalid(format!(
                "{what} sample `{}` has input {:?} and mask {:?}, expected {want:?} and [1, {}, {}]",
                s.id,
                s.input.shape(),
                s.mask.shape(),
                want[1],
                want[2]
            )));
        }
    }
    Ok(())
}

fn stack<T: Scalar>(items: &[(Tensor<T>, Tensor<T>)]) -> Result<(Tensor<T>, Tensor<T>), TrainError> {
    let mut xs = Vec::with_capacity(items.len() * items[0].0.len());
    let mut ys = Vec::with_capacity(items.len() * items[0].1.len());
    for (x, y) in items {
        xs.extend_from_slice(x.data());
        ys.extend_from_slice(y.data());
    }
    let b = items.len();
    let xshape: Vec<usize> = std::iter::once(b).chain(items[0].0.shape().iter().copied()).collect();
    let yshape: Vec<usize> = std::iter::once(b).chain(items[0].1.shape().iter().copied()).collect();
    Ok((Tensor::from_vec(&xshape, xs)?, Tensor::from_vec(&yshape, ys)?))
}

/// Input as seen at evaluation time: fixed contrast window, no geometry.
pub(crate) fn eval_input<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut x = input.clone();
    normalize_contrast(&mut x, DEFAULT_WINDOW.0, DEFAULT_WINDOW.1);
    x
}

fn augmented<T: Scalar>(s: &Sample<T>, cfg: &TrainConfig, mut rng: Rng) -> (Tensor<T>, Tensor<T>) {
    let (mut x, y) = if cfg.augment_geometric {
        augment_geometric(&s.input, &s.mask, &cfg.augmentation, &mut rng)
    } else {
        (s.input.clone(), s.mask.clone())
    };
    if cfg.augment_contrast {
        augment_contrast(&mut x, &cfg.augmentation, &mut rng);
    } else {
        normalize_contrast(&mut x, DEFAULT_WINDOW.0, DEFAULT_WINDOW.1);
    }
    (x, y)
}

/// Mean loss over `samples` in inference mode, in batches of `batch_size`.
pub fn evaluate_loss<T: Scalar>(
    model: &ModelState<T>,
    samples: &[Sample<T>],
    batch_size: usize,
    loss: &JaccardLossConfig,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let items: Vec<_> = chunk.par_iter().map(|s| (eval_input(&s.input), s.mask.clone())).collect();
        let (x, y) = stack(&items)?;
        let p = model.predict(&x)?;
        total += jaccard_loss(&y, &p, loss)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

fn run<T: Scalar>(
    mut model: ModelState<T>,
    train: &[Sample<T>],
    val: Option<&[Sample<T>]>,
    cfg: &TrainConfig,
    rng: &Rng,
) -> Result<(ModelState<T>, LossCurve), TrainError> {
    check_samples(&model, train, "training")?;
    if let Some(val) = val {
        check_samples(&model, val, "validation")?;
    }
    cfg.validate(train.len())?;
    model.optimizer.config.lr = cfg.lr;

    let mut curve = LossCurve::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng.derive(stream(epoch, SHUFFLE, 0)));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<_> = chunk
                .par_iter()
                .enumerate()
                .map(|(j, &i)| augmented(&train[i], cfg, rng.derive(stream(epoch, AUGMENT, b * cfg.batch_size + j))))
                .collect();
            let (x, y) = stack(&items)?;
            let mut dropout_rng = rng.derive(stream(epoch, DROPOUT, b));
            let (p, cache) = model.forward(&x, Mode::Train, &mut dropout_rng)?;
            let loss = jaccard_loss(&y, &p, &cfg.loss)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            let grad = jaccard_loss_grad(&y, &p, &cfg.loss)?;
            let grads = model.backward(&cache.expect("train mode returns a cache"), &grad)?;
            model.apply_gradients(&grads.tensors)?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let val_loss = val.map(|v| evaluate_loss(&model, v, cfg.batch_size, &cfg.loss)).transpose()?;
        match val_loss {
            Some(v) => log::info!("epoch {epoch}/{}: train loss {train_loss:.5}, val loss {v:.5}", cfg.epochs),
            None => log::info!("epoch {epoch}/{}: train loss {train_loss:.5}", cfg.epochs),
        }
        curve.epochs.push(EpochLoss { epoch, train_loss, val_loss });
    }
    Ok((model, curve))
}

/// Trains on `train` for `cfg.epochs` passes, recording the training loss
/// and the inference-mode loss on `val` after each pass.
pub fn train_fold<T: Scalar>(
    model: ModelState<T>,
    train: &[Sample<T>],
    val: &[Sample<T>],
    cfg: &TrainConfig,
    rng: &Rng,
) -> Result<(ModelState<T>, LossCurve), TrainError> {
    if val.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    run(model, train, Some(val), cfg, rng)
}

/// Trains on every sample without a held-out set.
pub fn train_full<T: Scalar>(
    model: ModelState<T>,
    train: &[Sample<T>],
    cfg: &TrainConfig,
    rng: &Rng,
) -> Result<(ModelState<T>, LossCurve), TrainError> {
    run(model, train, None, cfg, rng)
}
