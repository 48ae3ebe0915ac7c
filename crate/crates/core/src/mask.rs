//! Binary masks and probability maps, with 8-bit PNG encoding.

use std::path::Path;

use crate::tensor::{Scalar, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("mask extents {found:?} do not match {expected:?}")]
    Extents { expected: (usize, usize), found: (usize, usize) },
    #[error("{len} values cannot fill a {height}x{width} map")]
    Length { height: usize, width: usize, len: usize },
    #[error("expected a single-channel map, got shape {0:?}")]
    Shape(Vec<usize>),
    #[error("{path}: {source}")]
    Image { path: String, source: image::ImageError },
}

/// A `height x width` foreground/background mask in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self, MaskError> {
        if data.len() != height * width {
            return Err(MaskError::Length { height, width, len: data.len() });
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.extents() == other.extents() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// `(1, H, W)` tensor of zeros and ones.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| if v { T::one() } else { T::zero() }).collect();
        Tensor::from_vec(&[1, self.height, self.width], data).expect("extents match data")
    }

    /// Thresholds a single-channel tensor at `threshold` (inclusive).
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, threshold: f64) -> Result<Self, MaskError> {
        let (h, w) = single_channel_extents(t.shape())?;
        Ok(Self { height: h, width: w, data: t.data().iter().map(|v| v.as_f64() >= threshold).collect() })
    }

    /// Reads an 8-bit grayscale (or color, converted to luma) PNG; pixels
    /// of 128 and above are foreground.
    pub fn load_png(path: &Path) -> Result<Self, MaskError> {
        let img = image::open(path).map_err(|source| image_err(path, source))?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(Self { height: h as usize, width: w as usize, data: img.pixels().map(|p| p.0[0] >= 128).collect() })
    }

    /// Writes 0/255 grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let bytes = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes).expect("extents match data");
        img.save_with_format(path, image::ImageFormat::Png).map_err(|source| image_err(path, source))
    }
}

/// Per-pixel lesion probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, MaskError> {
        if data.len() != height * width {
            return Err(MaskError::Length { height, width, len: data.len() });
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, data }
    }

    /// From a `(1, H, W)`, `(1, 1, H, W)` or `(H, W)` tensor.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self, MaskError> {
        let (height, width) = single_channel_extents(t.shape())?;
        Ok(Self { height, width, data: t.data().iter().map(|v| v.as_f64()).collect() })
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&v| T::from_f64_lossy(v)).collect();
        Tensor::from_vec(&[1, self.height, self.width], data).expect("extents match data")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn threshold(&self, th: f64) -> BinaryMask {
        BinaryMask { height: self.height, width: self.width, data: self.data.iter().map(|&p| p >= th).collect() }
    }

    /// Writes an 8-bit grayscale PNG with value `round(255 p)`.
    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let bytes = self.data.iter().map(|&p| (255.0 * p.clamp(0.0, 1.0)).round() as u8).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes).expect("extents match data");
        img.save_with_format(path, image::ImageFormat::Png).map_err(|source| image_err(path, source))
    }
}

fn single_channel_extents(shape: &[usize]) -> Result<(usize, usize), MaskError> {
    match *shape {
        [h, w] | [1, h, w] | [1, 1, h, w] => Ok((h, w)),
        _ => Err(MaskError::Shape(shape.to_vec())),
    }
}

pub(crate) fn image_err(path: &Path, source: image::ImageError) -> MaskError {
    MaskError::Image { path: path.display().to_string(), source }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(5, 7, |y, x| (x + y) % 3 == 0);
        let path = dir.path().join("m.png");
        m.save_png(&path).unwrap();
        assert_eq!(BinaryMask::load_png(&path).unwrap(), m);
    }

    #[test]
    fn probability_png_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = ProbabilityMap::new(1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let path = dir.path().join("p.png");
        p.save_png(&path).unwrap();
        let img = image::open(&path).unwrap().to_luma8();
        assert_eq!(img.into_raw(), vec![0, 128, 255]);
    }

    #[test]
    fn tensor_conversions() {
        let t = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![0.1, 0.5, 0.7, 0.49]).unwrap();
        let m = BinaryMask::from_tensor(&t, 0.5).unwrap();
        assert_eq!(m.data(), &[false, true, true, false]);
        assert_eq!(m.to_tensor::<f64>().shape(), &[1, 2, 2]);
        assert!(BinaryMask::from_tensor(&Tensor::<f32>::zeros(&[2, 2, 2]), 0.5).is_err());
    }
}
