use serde::{Deserialize, Serialize};

use super::contrast::percentile_contrast_normalize;
use super::PipelineError;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Ranges from which per-sample augmentations are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    /// Probability of a left-right flip.
    pub flip_horizontal: f64,
    /// Probability of an up-down flip.
    pub flip_vertical: f64,
    /// Maximum shift as a fraction of each extent.
    pub shift: f64,
    /// Maximum rotation in degrees, either direction.
    pub rotation_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Range of the lower percentile of the contrast window.
    pub contrast_low: (f64, f64),
    /// Range of the upper percentile of the contrast window.
    pub contrast_high: (f64, f64),
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            flip_horizontal: 0.5,
            flip_vertical: 0.5,
            shift: 0.1,
            rotation_deg: 20.0,
            scale_min: 0.8,
            scale_max: 1.25,
            contrast_low: (0.0, 10.0),
            contrast_high: (90.0, 100.0),
        }
    }
}

impl AugmentationConfig {
    /// No geometric change and a fixed `[5, 95]` contrast window.
    pub fn fixed() -> Self {
        Self {
            flip_horizontal: 0.0,
            flip_vertical: 0.0,
            shift: 0.0,
            rotation_deg: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            contrast_low: (5.0, 5.0),
            contrast_high: (95.0, 95.0),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |what: &str| Err(PipelineError::InvalidConfig(what.to_string()));
        let prob = 0.0..=1.0;
        if !prob.contains(&self.flip_horizontal) || !prob.contains(&self.flip_vertical) {
            return bad("flip probabilities must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.shift) {
            return bad("shift must lie in [0, 1)");
        }
        if !(0.0..=180.0).contains(&self.rotation_deg) {
            return bad("rotation_deg must lie in [0, 180]");
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return bad("scale range must satisfy 0 < scale_min <= scale_max");
        }
        let (l0, l1) = self.contrast_low;
        let (h0, h1) = self.contrast_high;
        if !(0.0 <= l0 && l0 <= l1 && l1 < h0 && h0 <= h1 && h1 <= 100.0) {
            return bad("contrast windows must satisfy 0 <= low.0 <= low.1 < high.0 <= high.1 <= 100");
        }
        Ok(())
    }
}

/// One sampled similarity transform (plus flips) about the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricTransform {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    /// Shift in pixels, `(dx, dy)`.
    pub shift: (f64, f64),
    /// Rotation in radians; positive turns +x toward +y (clockwise on screen).
    pub angle: f64,
    pub scale: f64,
}

impl GeometricTransform {
    pub const IDENTITY: Self =
        Self { flip_horizontal: false, flip_vertical: false, shift: (0.0, 0.0), angle: 0.0, scale: 1.0 };

    /// Draws a transform for an `h x w` image. Always consumes the same
    /// number of draws from `rng`.
    pub fn sample(cfg: &AugmentationConfig, h: usize, w: usize, rng: &mut Rng) -> Self {
        let flip_horizontal = rng.uniform(0.0, 1.0) < cfg.flip_horizontal;
        let flip_vertical = rng.uniform(0.0, 1.0) < cfg.flip_vertical;
        let dx = rng.uniform(-cfg.shift, cfg.shift) * w as f64;
        let dy = rng.uniform(-cfg.shift, cfg.shift) * h as f64;
        let angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg).to_radians();
        let scale = rng.uniform(cfg.scale_min, cfg.scale_max);
        Self { flip_horizontal, flip_vertical, shift: (dx, dy), angle, scale }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Image of point `(x, y)` under the transform in an `h x w` frame.
    pub fn forward_point(&self, x: f64, y: f64, h: usize, w: usize) -> (f64, f64) {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let mut u = x - cx;
        let mut v = y - cy;
        if self.flip_horizontal {
            u = -u;
        }
        if self.flip_vertical {
            v = -v;
        }
        let (s, c) = self.angle.sin_cos();
        (cx + self.shift.0 + self.scale * (c * u - s * v), cy + self.shift.1 + self.scale * (s * u + c * v))
    }

    fn inverse_point(&self, x: f64, y: f64, h: usize, w: usize) -> (f64, f64) {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let u = (x - cx - self.shift.0) / self.scale;
        let v = (y - cy - self.shift.1) / self.scale;
        let (s, c) = self.angle.sin_cos();
        let mut su = c * u + s * v;
        let mut sv = -s * u + c * v;
        if self.flip_horizontal {
            su = -su;
        }
        if self.flip_vertical {
            sv = -sv;
        }
        (cx + su, cy + sv)
    }

    /// Resamples every channel of a `(C, H, W)` tensor by inverse mapping
    /// with bilinear interpolation. Samples outside the frame are 0.
    pub fn apply<T: Scalar>(&self, img: &Tensor<T>) -> Tensor<T> {
        let [c, h, w] = *img.shape() else {
            panic!("expected (C, H, W), got {:?}", img.shape());
        };
        if self.is_identity() {
            return img.clone();
        }
        let taps: Vec<Option<[(usize, f64); 4]>> = (0..h * w)
            .map(|i| {
                let (x, y) = self.inverse_point((i % w) as f64, (i / w) as f64, h, w);
                bilinear_taps(x, y, h, w)
            })
            .collect();
        let src = img.data();
        let mut out = vec![T::zero(); c * h * w];
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for (o, tap) in out[ch * h * w..(ch + 1) * h * w].iter_mut().zip(&taps) {
                if let Some(tap) = tap {
                    let v: f64 = tap.iter().map(|&(idx, wt)| plane[idx].as_f64() * wt).sum();
                    *o = T::from_f64_lossy(v);
                }
            }
        }
        Tensor::from_vec(&[c, h, w], out).expect("extents match data")
    }
}

/// Four (index, weight) pairs for sampling at `(x, y)`, or `None` outside
/// the frame (pixel centers at integers, frame edges at -0.5 and n - 0.5).
fn bilinear_taps(x: f64, y: f64, h: usize, w: usize) -> Option<[(usize, f64); 4]> {
    if !(x >= -0.5 && x <= w as f64 - 0.5 && y >= -0.5 && y <= h as f64 - 0.5) {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    Some([
        (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * w + x1, fx * (1.0 - fy)),
        (y1 * w + x0, (1.0 - fx) * fy),
        (y1 * w + x1, fx * fy),
    ])
}

/// Applies one sampled transform to the input channels and the mask; the
/// mask is re-binarized at 0.5.
pub fn augment_geometric<T: Scalar>(
    input: &Tensor<T>,
    mask: &Tensor<T>,
    cfg: &AugmentationConfig,
    rng: &mut Rng,
) -> (Tensor<T>, Tensor<T>) {
    let [_, h, w] = *input.shape() else {
        panic!("expected (C, H, W), got {:?}", input.shape());
    };
    assert_eq!(&mask.shape()[1..], &[h, w], "mask extents differ from input");
    let t = GeometricTransform::sample(cfg, h, w, rng);
    if t.is_identity() {
        return (input.clone(), mask.clone());
    }
    let half = T::from_f64_lossy(0.5);
    let mask = t.apply(mask).map(|v| if v >= half { T::one() } else { T::zero() }).expect("binary values are finite");
    (t.apply(input), mask)
}

/// Normalizes each channel to a percentile window drawn from the
/// configured ranges.
pub fn augment_contrast<T: Scalar>(input: &mut Tensor<T>, cfg: &AugmentationConfig, rng: &mut Rng) {
    let [c, h, w] = *input.shape() else {
        panic!("expected (C, H, W), got {:?}", input.shape());
    };
    let n = h * w;
    for ch in 0..c {
        let lo = rng.uniform(cfg.contrast_low.0, cfg.contrast_low.1);
        let hi = rng.uniform(cfg.contrast_high.0, cfg.contrast_high.1);
        percentile_contrast_normalize(&mut input.data_mut()[ch * n..(ch + 1) * n], lo, hi);
    }
}
