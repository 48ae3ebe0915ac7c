use super::{expect_shape, LayerError, Mode};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutParams {
    pub rate: f64,
    pub mode: Mode,
}

/// Inverted dropout. Returns the output and, in train mode, the mask of
/// per-element multipliers (`0` or `1 / (1 - rate)`).
pub fn dropout<T: Scalar>(
    x: &Tensor<T>,
    p: &DropoutParams,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Option<Tensor<T>>), LayerError> {
    if !(0.0..1.0).contains(&p.rate) {
        return Err(LayerError::InvalidRate(p.rate));
    }
    if p.mode == Mode::Infer || p.rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p.rate));
    let mask = Tensor::from_fn(x.shape(), |_| if rng.bernoulli(p.rate) { T::zero() } else { keep });
    let y = x.mul(&mask)?;
    Ok((y, Some(mask)))
}

pub fn dropout_backward<T: Scalar>(mask: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    expect_shape(grad_out.shape(), mask.shape())?;
    Ok(grad_out.mul(mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infer_and_zero_rate_are_identity() {
        let mut rng = Rng::new(0);
        let x = Tensor::random_normal(&mut rng, &[2, 3, 4, 4], 0.0, 1.0).unwrap();
        let (y, m) = dropout(&x, &DropoutParams { rate: 0.5, mode: Mode::Infer }, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(m.is_none());
        let (y, _) = dropout(&x, &DropoutParams { rate: 0.0, mode: Mode::Train }, &mut rng).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn expectation_is_preserved() {
        let x = Tensor::<f64>::ones(&[100_000]);
        let (y, _) = dropout(&x, &DropoutParams { rate: 0.5, mode: Mode::Train }, &mut Rng::new(4)).unwrap();
        let mean = y.mean_all();
        assert!((0.98..=1.02).contains(&mean), "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn mask_reproducible_and_backward_uses_it() {
        let x = Tensor::<f32>::ones(&[64]);
        let p = DropoutParams { rate: 0.3, mode: Mode::Train };
        let (_, a) = dropout(&x, &p, &mut Rng::new(12)).unwrap();
        let (_, b) = dropout(&x, &p, &mut Rng::new(12)).unwrap();
        let a = a.unwrap();
        assert_eq!(Some(&a), b.as_ref());
        let g = dropout_backward(&a, &Tensor::full(&[64], 2.0)).unwrap();
        for (gv, mv) in g.data().iter().zip(a.data()) {
            assert_eq!(*gv, 2.0 * mv);
        }
    }

    #[test]
    fn rate_of_one_rejected() {
        let x = Tensor::<f32>::ones(&[4]);
        let p = DropoutParams { rate: 1.0, mode: Mode::Train };
        assert_eq!(dropout(&x, &p, &mut Rng::new(0)).unwrap_err(), LayerError::InvalidRate(1.0));
    }
}
