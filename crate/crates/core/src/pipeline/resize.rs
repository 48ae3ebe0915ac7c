use crate::tensor::{Scalar, Tensor};

/// Source coordinate sampled by output index `dst` under the half-pixel
/// convention, clamped to the valid range.
fn source_coord(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5).clamp(0.0, (in_len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize of every channel of a `(C, H, W)` tensor.
///
/// Pixel centers sit at half-integer coordinates; samples beyond the edge
/// are clamped to the border pixel.
pub fn bilinear_resize<T: Scalar>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let [c, h, w] = *img.shape() else {
        panic!("bilinear_resize expects (C, H, W), got {:?}", img.shape());
    };
    assert!(out_h >= 1 && out_w >= 1, "output extents must be positive");
    if (h, w) == (out_h, out_w) {
        return img.clone();
    }
    let rows: Vec<_> = (0..out_h).map(|y| source_coord(y, h, out_h)).collect();
    let cols: Vec<_> = (0..out_w).map(|x| source_coord(x, w, out_w)).collect();
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let p = |y: usize, x: usize| plane[y * w + x].as_f64();
                let top = p(y0, x0) + (p(y0, x1) - p(y0, x0)) * fx;
                let bottom = p(y1, x0) + (p(y1, x1) - p(y1, x0)) * fx;
                out.push(T::from_f64_lossy(top + (bottom - top) * fy));
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out).expect("extents match data")
}
