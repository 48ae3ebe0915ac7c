//! Image preprocessing and augmentation: resizing, the seven-channel input
//! (R, G, B, H, S, V, L), percentile contrast normalization and random
//! geometric/contrast transforms.

mod augment;
mod color;
mod contrast;
mod resize;

use std::path::Path;

pub use augment::{augment_contrast, augment_geometric, AugmentationConfig, GeometricTransform};
pub use color::{hsv_pixel, lab_lightness_pixel, rgb_to_hsv, rgb_to_lab_l};
pub use contrast::{percentile, percentile_contrast_normalize};
pub use resize::bilinear_resize;

use crate::mask::{image_err, BinaryMask, MaskError};
use crate::tensor::{Scalar, Tensor};

pub const INPUT_HEIGHT: usize = 192;
pub const INPUT_WIDTH: usize = 256;
pub const INPUT_CHANNELS: usize = 7;
/// Contrast window applied when no augmentation is drawn.
pub const DEFAULT_WINDOW: (f64, f64) = (5.0, 95.0);

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("image has zero extent")]
    EmptyImage,
}

/// Decoded RGB image, `(3, H, W)` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage<T> {
    tensor: Tensor<T>,
}

impl<T: Scalar> RgbImage<T> {
    pub fn from_tensor(tensor: Tensor<T>) -> Result<Self, PipelineError> {
        match *tensor.shape() {
            [3, h, w] if h > 0 && w > 0 => {}
            _ => return Err(PipelineError::EmptyImage),
        }
        let clipped = tensor.map(|v| v.max(T::zero()).min(T::one())).map_err(|_| PipelineError::EmptyImage)?;
        Ok(Self { tensor: clipped })
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Result<Self, PipelineError> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w == 0 || h == 0 {
            return Err(PipelineError::EmptyImage);
        }
        let n = h * w;
        let mut data = vec![T::zero(); 3 * n];
        for (i, p) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = T::from_f64_lossy(p.0[c] as f64 / 255.0);
            }
        }
        Ok(Self { tensor: Tensor::from_vec(&[3, h, w], data).expect("extents match data") })
    }

    /// Decodes a PNG or JPEG file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
        Self::from_rgb8(&img)
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }
}

/// Network input `(7, 192, 256)`, channels R, G, B, H, S, V, L in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelInput<T> {
    tensor: Tensor<T>,
}

impl<T: Scalar> MultiChannelInput<T> {
    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.tensor
    }
}

/// Resizes to 192 x 256 and stacks RGB, HSV and L.
pub fn compose_input<T: Scalar>(img: &RgbImage<T>) -> MultiChannelInput<T> {
    MultiChannelInput { tensor: compose_channels(img, INPUT_HEIGHT, INPUT_WIDTH) }
}

/// [`compose_input`] at arbitrary extents.
pub fn compose_channels<T: Scalar>(img: &RgbImage<T>, h: usize, w: usize) -> Tensor<T> {
    let rgb = bilinear_resize(img.tensor(), h, w);
    let hsv = rgb_to_hsv(&rgb);
    let l = rgb_to_lab_l(&rgb);
    let mut data = Vec::with_capacity(INPUT_CHANNELS * h * w);
    data.extend_from_slice(rgb.data());
    data.extend_from_slice(hsv.data());
    data.extend_from_slice(l.data());
    Tensor::from_vec(&[INPUT_CHANNELS, h, w], data).expect("extents match data")
}

/// Applies one fixed percentile window to every channel of `(C, H, W)`.
pub fn normalize_contrast<T: Scalar>(input: &mut Tensor<T>, lo_pct: f64, hi_pct: f64) {
    let [c, h, w] = *input.shape() else {
        panic!("expected (C, H, W), got {:?}", input.shape());
    };
    let n = h * w;
    for ch in 0..c {
        percentile_contrast_normalize(&mut input.data_mut()[ch * n..(ch + 1) * n], lo_pct, hi_pct);
    }
}

/// Bilinear resize of a mask followed by a 0.5 threshold.
pub fn resize_mask(mask: &BinaryMask, h: usize, w: usize) -> BinaryMask {
    if mask.extents() == (h, w) {
        return mask.clone();
    }
    let resized = bilinear_resize(&mask.to_tensor::<f64>(), h, w);
    BinaryMask::from_tensor(&resized, 0.5).expect("single channel")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_image() -> RgbImage<f64> {
        let t = Tensor::from_fn(&[3, 30, 40], |i| ((i * 31) % 97) as f64 / 96.0);
        RgbImage::from_tensor(t).unwrap()
    }

    #[test]
    fn composed_layout() {
        let img = sample_image();
        let x = compose_input(&img).into_tensor();
        assert_eq!(x.shape(), &[7, 192, 256]);
        let rgb = bilinear_resize(img.tensor(), 192, 256);
        let n = 192 * 256;
        assert_eq!(&x.data()[..3 * n], rgb.data());
        assert_eq!(&x.data()[6 * n..], rgb_to_lab_l(&rgb).data());
        assert!(x.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(compose_input(&img), compose_input(&img));
    }

    #[test]
    fn rgb8_decoding() {
        let img = image::RgbImage::from_fn(2, 1, |x, _| image::Rgb([255 * x as u8, 0, 51]));
        let rgb = RgbImage::<f32>::from_rgb8(&img).unwrap();
        assert_eq!(rgb.tensor().data(), &[0.0, 1.0, 0.0, 0.0, 0.2, 0.2]);
    }

    #[test]
    fn mask_resize_scales_area() {
        let m = BinaryMask::from_fn(40, 40, |y, x| (10..30).contains(&y) && (10..30).contains(&x));
        let up = resize_mask(&m, 80, 80);
        let ratio = up.count() as f64 / (4 * m.count()) as f64;
        assert!((ratio - 1.0).abs() < 0.1);
    }
}
