use crate::tensor::{Scalar, Tensor};

/// HSV of one pixel, each component in `[0, 1]`; hue is degrees / 360.
pub fn hsv_pixel(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = (h / 6.0).rem_euclid(1.0);
    let s = if max <= 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// CIELAB lightness L* in `[0, 100]` of an sRGB pixel (D65 white).
pub fn lab_lightness_pixel(r: f64, g: f64, b: f64) -> f64 {
    let y = 0.212_672_9 * srgb_to_linear(r) + 0.715_152_2 * srgb_to_linear(g) + 0.072_175_0 * srgb_to_linear(b);
    const DELTA: f64 = 6.0 / 29.0;
    let f = if y > DELTA.powi(3) { y.cbrt() } else { y / (3.0 * DELTA * DELTA) + 4.0 / 29.0 };
    (116.0 * f - 16.0).clamp(0.0, 100.0)
}

fn planes<T: Scalar>(rgb: &Tensor<T>) -> (usize, usize) {
    match *rgb.shape() {
        [3, h, w] => (h, w),
        ref s => panic!("expected a (3, H, W) RGB tensor, got {s:?}"),
    }
}

/// `(3, H, W)` RGB in `[0, 1]` to `(3, H, W)` HSV in `[0, 1]`.
pub fn rgb_to_hsv<T: Scalar>(rgb: &Tensor<T>) -> Tensor<T> {
    let (h, w) = planes(rgb);
    let n = h * w;
    let d = rgb.data();
    let mut out = vec![T::zero(); 3 * n];
    for i in 0..n {
        let (hh, s, v) = hsv_pixel(d[i].as_f64(), d[n + i].as_f64(), d[2 * n + i].as_f64());
        out[i] = T::from_f64_lossy(hh);
        out[n + i] = T::from_f64_lossy(s);
        out[2 * n + i] = T::from_f64_lossy(v);
    }
    Tensor::from_vec(&[3, h, w], out).expect("extents match data")
}

/// `(3, H, W)` sRGB in `[0, 1]` to `(1, H, W)` L* / 100.
pub fn rgb_to_lab_l<T: Scalar>(rgb: &Tensor<T>) -> Tensor<T> {
    let (h, w) = planes(rgb);
    let n = h * w;
    let d = rgb.data();
    let out = (0..n)
        .map(|i| T::from_f64_lossy(lab_lightness_pixel(d[i].as_f64(), d[n + i].as_f64(), d[2 * n + i].as_f64()) / 100.0))
        .collect();
    Tensor::from_vec(&[1, h, w], out).expect("extents match data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_anchors() {
        assert_eq!(hsv_pixel(1.0, 0.0, 0.0), (0.0, 1.0, 1.0));
        let (h, s, v) = hsv_pixel(0.0, 1.0, 0.0);
        assert!((h - 1.0 / 3.0).abs() < 1e-12 && s == 1.0 && v == 1.0);
        let (h, _, _) = hsv_pixel(0.0, 0.0, 1.0);
        assert!((h - 2.0 / 3.0).abs() < 1e-12);
        for c in [0.0, 0.3, 1.0] {
            let (_, s, v) = hsv_pixel(c, c, c);
            assert_eq!((s, v), (0.0, c));
        }
        // Magenta sits just below a full turn.
        let (h, _, _) = hsv_pixel(1.0, 0.0, 1.0);
        assert!((h - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn lightness_anchors() {
        assert!((lab_lightness_pixel(1.0, 1.0, 1.0) - 100.0).abs() < 1e-3);
        assert_eq!(lab_lightness_pixel(0.0, 0.0, 0.0), 0.0);
        assert!((lab_lightness_pixel(0.5, 0.5, 0.5) - 53.389).abs() < 1e-2);
    }

    #[test]
    fn tensor_versions_match_pixels() {
        let rgb = Tensor::<f64>::from_vec(&[3, 1, 2], vec![1.0, 0.2, 0.0, 0.4, 0.0, 0.9]).unwrap();
        let hsv = rgb_to_hsv(&rgb);
        let (h, s, v) = hsv_pixel(0.2, 0.4, 0.9);
        assert_eq!(&[hsv.data()[1], hsv.data()[3], hsv.data()[5]], &[h, s, v]);
        let l = rgb_to_lab_l(&rgb);
        assert_eq!(l.shape(), &[1, 1, 2]);
        assert!((l.data()[1] - lab_lightness_pixel(0.2, 0.4, 0.9) / 100.0).abs() < 1e-15);
    }
}
