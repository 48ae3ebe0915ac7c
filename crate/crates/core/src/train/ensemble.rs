use super::TrainError;
use crate::mask::ProbabilityMap;
use crate::model::{ModelError, ModelState};
use crate::tensor::{Scalar, Tensor};

/// Arithmetic mean of the models' probability maps for input `x`.
pub fn ensemble_predict<T: Scalar>(models: &[ModelState<T>], x: &Tensor<T>) -> Result<Tensor<T>, TrainError> {
    let first = models.first().ok_or_else(|| TrainError::Invalid("ensemble needs at least one model".into()))?;
    for m in &models[1..] {
        if m.fingerprint() != first.fingerprint() {
            return Err(ModelError::FingerprintMismatch { expected: first.fingerprint(), found: m.fingerprint() }.into());
        }
    }
    let mut sum = first.predict(x)?;
    if models.len() == 1 {
        return Ok(sum);
    }
    for m in &models[1..] {
        sum.axpy(T::one(), &m.predict(x)?)?;
    }
    Ok(sum.scale(T::from_f64_lossy(1.0 / models.len() as f64))?)
}

/// Ensemble maps split into one [`ProbabilityMap`] per batch item.
pub fn ensemble_predict_maps<T: Scalar>(models: &[ModelState<T>], x: &Tensor<T>) -> Result<Vec<ProbabilityMap>, TrainError> {
    let p = ensemble_predict(models, x)?;
    let (b, _, h, w) = p.dims4()?;
    Ok((0..b)
        .map(|i| ProbabilityMap::new(h, w, p.data()[i * h * w..(i + 1) * h * w].iter().map(|v| v.as_f64()).collect()).expect("extents match"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ArchitectureSpec, LayerSpec};
    use crate::rng::Rng;

    fn tiny(features: usize) -> ArchitectureSpec {
        ArchitectureSpec {
            input_channels: 2,
            input_height: 4,
            input_width: 4,
            layers: vec![LayerSpec::conv("c1", 3, features), LayerSpec::output("out", 1, 1)],
        }
    }

    fn constant_model(bias: f32) -> ModelState<f32> {
        let mut m: ModelState<f32> = init_model(&tiny(2), &mut Rng::new(0)).unwrap();
        let out = m.layers_mut().last_mut().unwrap();
        out.conv.weight = Tensor::zeros(out.conv.weight.shape());
        out.conv.bias = Tensor::full(&[1], bias);
        m
    }

    #[test]
    fn constant_maps_average() {
        let x = Tensor::<f32>::full(&[1, 2, 4, 4], 0.3);
        let logit = |p: f32| (p / (1.0 - p)).ln();
        let models = [constant_model(logit(0.2)), constant_model(logit(0.8))];
        let p = ensemble_predict(&models, &x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn identity_cases() {
        let mut rng = Rng::new(1);
        let m: ModelState<f32> = init_model(&tiny(3), &mut rng).unwrap();
        let x = Tensor::<f32>::random_uniform(&mut rng, &[2, 2, 4, 4], 0.0, 1.0).unwrap();
        let single = ensemble_predict(std::slice::from_ref(&m), &x).unwrap();
        assert_eq!(single, m.predict(&x).unwrap());
        let triple = ensemble_predict(&[m.clone(), m.clone(), m.clone()], &x).unwrap();
        assert!(triple.data().iter().zip(single.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn fingerprint_mismatch() {
        let a: ModelState<f32> = init_model(&tiny(3), &mut Rng::new(1)).unwrap();
        let b: ModelState<f32> = init_model(&tiny(4), &mut Rng::new(1)).unwrap();
        let x = Tensor::<f32>::zeros(&[1, 2, 4, 4]);
        assert!(matches!(ensemble_predict(&[a, b], &x), Err(TrainError::Model(ModelError::FingerprintMismatch { .. }))));
        assert!(ensemble_predict::<f32>(&[], &x).is_err());
    }
}
