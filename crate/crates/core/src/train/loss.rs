use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::{Scalar, Tensor, TensorError};

/// Smoothed Jaccard distance
/// `1 - (sum tp + s) / (sum t^2 + sum p^2 - sum tp + s)`, with every sum
/// taken over all pixels of the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JaccardLossConfig {
    pub smooth: f64,
}

impl Default for JaccardLossConfig {
    fn default() -> Self {
        Self { smooth: 1.0 }
    }
}

/// `(N, D)`: smoothed intersection and union sums.
fn sums<T: Scalar>(t: &Tensor<T>, p: &Tensor<T>, cfg: &JaccardLossConfig) -> Result<(f64, f64), TrainError> {
    if t.shape() != p.shape() {
        return Err(TensorError::ShapeMismatch { left: t.shape().to_vec(), right: p.shape().to_vec() }.into());
    }
    let (mut tp, mut tt, mut pp) = (0.0f64, 0.0f64, 0.0f64);
    for (index, (&tv, &pv)) in t.data().iter().zip(p.data()).enumerate() {
        let (tv, pv) = (tv.as_f64(), pv.as_f64());
        if tv != 0.0 && tv != 1.0 {
            return Err(TrainError::NonBinaryTarget { index, value: tv });
        }
        if !(0.0..=1.0).contains(&pv) {
            return Err(TrainError::PredictionRange { index, value: pv });
        }
        tp += tv * pv;
        tt += tv * tv;
        pp += pv * pv;
    }
    Ok((tp + cfg.smooth, tt + pp - tp + cfg.smooth))
}

/// Loss in `[0, 1]`. With `smooth = 0` and both maps identically zero the
/// ratio is undefined and the loss is reported as 0.
pub fn jaccard_loss<T: Scalar>(t: &Tensor<T>, p: &Tensor<T>, cfg: &JaccardLossConfig) -> Result<f64, TrainError> {
    let (n, d) = sums(t, p, cfg)?;
    if d == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - n / d).clamp(0.0, 1.0))
}

/// `dL/dp = -(t D - N (2p - t)) / D^2` elementwise.
pub fn jaccard_loss_grad<T: Scalar>(
    t: &Tensor<T>,
    p: &Tensor<T>,
    cfg: &JaccardLossConfig,
) -> Result<Tensor<T>, TrainError> {
    let (n, d) = sums(t, p, cfg)?;
    if d == 0.0 {
        return Ok(Tensor::zeros(p.shape()));
    }
    let d2 = d * d;
    let data = t
        .data()
        .iter()
        .zip(p.data())
        .map(|(&tv, &pv)| {
            let (tv, pv) = (tv.as_f64(), pv.as_f64());
            T::from_f64_lossy(-(tv * d - n * (2.0 * pv - tv)) / d2)
        })
        .collect();
    Ok(Tensor::from_vec(p.shape(), data)?)
}
