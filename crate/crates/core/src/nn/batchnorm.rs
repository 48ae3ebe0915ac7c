use super::{expect_shape, LayerError, Mode};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-channel scale/shift plus running statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    /// Weight of the new batch statistic in the running average.
    pub momentum: f64,
    pub epsilon: f64,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::ones(&[channels]),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::ones(&[channels]),
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Values saved by a train-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Calls `f(channel, slice)` for every `(batch, channel)` plane.
fn planes<T>(data: &[T], b: usize, c: usize, plane: usize, mut f: impl FnMut(usize, &[T])) {
    for bi in 0..b {
        for ch in 0..c {
            let start = (bi * c + ch) * plane;
            f(ch, &data[start..start + plane]);
        }
    }
}

pub fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>), LayerError> {
    let (b, c, h, w) = x.dims4()?;
    if p.channels() != c {
        return Err(LayerError::ChannelMismatch { expected: p.channels(), found: c });
    }
    let plane = h * w;
    let count = b * plane;
    match mode {
        Mode::Infer => Ok((batchnorm_infer(x, p)?, None)),
        Mode::Train => {
            let mut y = Tensor::zeros(x.shape());
            if count < 2 {
                return Err(LayerError::TooFewSamples { count });
            }
            let mut sums = vec![0.0f64; c];
            planes(x.data(), b, c, plane, |ch, s| sums[ch] += s.iter().map(|v| v.as_f64()).sum::<f64>());
            let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
            let mut sq = vec![0.0f64; c];
            planes(x.data(), b, c, plane, |ch, s| {
                sq[ch] += s.iter().map(|v| (v.as_f64() - means[ch]).powi(2)).sum::<f64>()
            });
            let vars: Vec<f64> = sq.iter().map(|s| s / count as f64).collect();
            let inv_std: Vec<T> = vars.iter().map(|v| T::from_f64_lossy(1.0 / (v + p.epsilon).sqrt())).collect();
            let mean_t: Vec<T> = means.iter().map(|&m| T::from_f64_lossy(m)).collect();

            let mut normalized = Tensor::zeros(x.shape());
            for (i, ((n, out), &v)) in normalized.data_mut().iter_mut().zip(y.data_mut()).zip(x.data()).enumerate() {
                let ch = (i / plane) % c;
                *n = (v - mean_t[ch]) * inv_std[ch];
                *out = *n * p.gamma.data()[ch] + p.beta.data()[ch];
            }

            let m = p.momentum;
            let unbias = count as f64 / (count - 1) as f64;
            for ch in 0..c {
                let rm = &mut p.running_mean.data_mut()[ch];
                *rm = T::from_f64_lossy((1.0 - m) * rm.as_f64() + m * means[ch]);
                let rv = &mut p.running_var.data_mut()[ch];
                *rv = T::from_f64_lossy((1.0 - m) * rv.as_f64() + m * vars[ch] * unbias);
            }
            Ok((y, Some(BatchNormCache { normalized, inv_std })))
        }
    }
}

/// Inference-mode normalization with the running statistics.
pub fn batchnorm_infer<T: Scalar>(x: &Tensor<T>, p: &BatchNormParams<T>) -> Result<Tensor<T>, LayerError> {
    let (_, c, h, w) = x.dims4()?;
    if p.channels() != c {
        return Err(LayerError::ChannelMismatch { expected: p.channels(), found: c });
    }
    let plane = h * w;
    let scale: Vec<T> = (0..c)
        .map(|ch| {
            let var = p.running_var.data()[ch].as_f64();
            T::from_f64_lossy(p.gamma.data()[ch].as_f64() / (var + p.epsilon).sqrt())
        })
        .collect();
    let mut y = x.clone();
    for (i, v) in y.data_mut().iter_mut().enumerate() {
        let ch = (i / plane) % c;
        *v = (*v - p.running_mean.data()[ch]) * scale[ch] + p.beta.data()[ch];
    }
    Ok(y)
}

/// Gradients through a train-mode [`batchnorm_forward`].
pub fn batchnorm_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    p: &BatchNormParams<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>, LayerError> {
    expect_shape(grad_out.shape(), cache.normalized.shape())?;
    let (b, c, h, w) = grad_out.dims4()?;
    let plane = h * w;
    let n = (b * plane) as f64;

    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    for bi in 0..b {
        for ch in 0..c {
            let start = (bi * c + ch) * plane;
            let g = &grad_out.data()[start..start + plane];
            let xh = &cache.normalized.data()[start..start + plane];
            sum_g[ch] += g.iter().map(|v| v.as_f64()).sum::<f64>();
            sum_gx[ch] += g.iter().zip(xh).map(|(a, b)| a.as_f64() * b.as_f64()).sum::<f64>();
        }
    }

    let mut grad_x = Tensor::zeros(grad_out.shape());
    for (i, ((gx, &g), &xh)) in
        grad_x.data_mut().iter_mut().zip(grad_out.data()).zip(cache.normalized.data()).enumerate()
    {
        let ch = (i / plane) % c;
        let gamma = p.gamma.data()[ch].as_f64();
        let k = gamma * cache.inv_std[ch].as_f64() / n;
        *gx = T::from_f64_lossy(k * (n * g.as_f64() - sum_g[ch] - xh.as_f64() * sum_gx[ch]));
    }
    let to_t = |v: &[f64]| Tensor::from_vec(&[c], v.iter().map(|&x| T::from_f64_lossy(x)).collect());
    Ok(BatchNormGrads { input: grad_x, gamma: to_t(&sum_gx)?, beta: to_t(&sum_g)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_channels_map_to_beta() {
        let mut p = BatchNormParams::<f64>::new(2);
        p.beta = Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap();
        let x = Tensor::from_fn(&[3, 2, 2, 2], |i| if (i / 4) % 2 == 0 { 5.0 } else { -1.0 });
        let (y, _) = batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let expected = if (i / 4) % 2 == 0 { 0.3 } else { -0.7 };
            assert!((v - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn normalizes_to_zero_mean_unit_variance() {
        let mut rng = Rng::new(3);
        let x = Tensor::random_normal(&mut rng, &[4, 3, 5, 5], 2.0, 3.0).unwrap();
        let mut p = BatchNormParams::<f64>::new(3);
        let (y, _) = batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = y.data().iter().enumerate().filter(|(i, _)| (i / 25) % 3 == ch).map(|(_, &v)| v).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-5, "{var}");
        }
    }

    #[test]
    fn running_stats_update_and_infer_uses_them() {
        let x = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0f64, 3.0, 5.0, 7.0]).unwrap();
        let mut p = BatchNormParams::<f64>::new(1);
        batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
        // batch mean 4, unbiased variance 20/3
        assert!((p.running_mean.data()[0] - 0.4).abs() < 1e-12);
        assert!((p.running_var.data()[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);

        let (y1, c) = batchnorm_forward(&x, &mut p, Mode::Infer).unwrap();
        assert!(c.is_none());
        let snapshot = p.clone();
        let (y2, _) = batchnorm_forward(&x, &mut p, Mode::Infer).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(p, snapshot);
    }

    #[test]
    fn too_few_samples_in_train_mode() {
        let x = Tensor::<f32>::ones(&[1, 2, 1, 1]);
        let mut p = BatchNormParams::new(2);
        assert_eq!(batchnorm_forward(&x, &mut p, Mode::Train).unwrap_err(), LayerError::TooFewSamples { count: 1 });
        assert!(batchnorm_forward(&x, &mut p, Mode::Infer).is_ok());
    }
}
