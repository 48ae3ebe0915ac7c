//! Bias-corrected Adam with per-tensor moment buffers.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.003, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimizer state: step count plus first/second moments, one pair per
/// trainable tensor in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    names: Vec<String>,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments for tensors with the given names and shapes.
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = (String, &'a [usize])>) -> Self {
        let mut names = Vec::new();
        let mut first = Vec::new();
        for (name, shape) in params {
            names.push(name);
            first.push(Tensor::zeros(shape));
        }
        let second = first.clone();
        Self { config, step: 0, names, first, second }
    }

    pub(crate) fn from_parts(
        config: AdamConfig,
        step: u64,
        names: Vec<String>,
        first: Vec<Tensor<T>>,
        second: Vec<Tensor<T>>,
    ) -> Self {
        Self { config, step, names, first, second }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }

    /// One update of `params` from `grads`. Nothing is modified if any
    /// gradient is non-finite or misshapen.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), TrainError> {
        if params.len() != self.names.len() || grads.len() != self.names.len() {
            return Err(TrainError::Invalid(format!(
                "optimizer tracks {} tensors, got {} params and {} gradients",
                self.names.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((name, p), g) in self.names.iter().zip(params.iter()).zip(grads) {
            if p.shape() != g.shape() {
                return Err(TrainError::Invalid(format!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(TrainError::NonFiniteGradient { name: name.clone() });
            }
        }

        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr = T::from_f64_lossy(c.lr);
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let eps = T::from_f64_lossy(c.epsilon);
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let one = T::one();

        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((pv, &gv), mv), vv) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(shape: &[usize]) -> AdamState<f64> {
        AdamState::new(AdamConfig::default(), [("w".to_string(), shape)])
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = single(&[3]);
        let mut p = Tensor::zeros(&[3]);
        adam.step(&mut [&mut p], &[Tensor::ones(&[3])]).unwrap();
        for &v in p.data() {
            assert!((v + 0.003 / (1.0 + 1e-8)).abs() < 1e-15);
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = single(&[2]);
        let mut p = Tensor::from_vec(&[2], vec![0.5, -1.5]).unwrap();
        let before = p.clone();
        adam.step(&mut [&mut p], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
        assert!(adam.second_moments()[0].data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut adam = single(&[2]);
            let mut p = Tensor::from_vec(&[2], vec![0.1, 0.2]).unwrap();
            for k in 0..5 {
                let g = Tensor::from_vec(&[2], vec![k as f64 * 0.3 - 0.5, 1.0 / (k + 1) as f64]).unwrap();
                adam.step(&mut [&mut p], &[g]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut adam = single(&[2]);
        let mut p = Tensor::zeros(&[2]);
        let mut g = Tensor::zeros(&[2]);
        g.data_mut()[1] = f64::NAN;
        match adam.step(&mut [&mut p], &[g]) {
            Err(TrainError::NonFiniteGradient { name }) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.step_count(), 0);
    }
}
