//! Procedural dermoscopy-like images: an elliptical pigmented lesion on a
//! skin-toned background with sensor noise and dark hair strokes.

use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::eval::MASK_SUFFIX;
use crate::mask::{BinaryMask, MaskError};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub id: String,
    pub image: image::RgbImage,
    pub mask: BinaryMask,
}

/// One image of `h x w` drawn from `rng`.
pub fn synthetic_image(id: &str, h: usize, w: usize, rng: &mut Rng) -> SyntheticImage {
    let (hf, wf) = (h as f64, w as f64);
    let cy = rng.uniform(0.35, 0.65) * hf;
    let cx = rng.uniform(0.35, 0.65) * wf;
    let ry = rng.uniform(0.15, 0.3) * hf;
    let rx = rng.uniform(0.15, 0.3) * wf;
    let theta = rng.uniform(0.0, std::f64::consts::PI);
    let (s, c) = theta.sin_cos();
    let inside = |y: f64, x: f64| {
        let (dy, dx) = (y - cy, x - cx);
        let u = (c * dx + s * dy) / rx;
        let v = (-s * dx + c * dy) / ry;
        u * u + v * v
    };
    let skin = [rng.uniform(0.75, 0.9), rng.uniform(0.55, 0.7), rng.uniform(0.45, 0.6)];
    let lesion = [rng.uniform(0.3, 0.45), rng.uniform(0.18, 0.28), rng.uniform(0.12, 0.2)];

    let mask = BinaryMask::from_fn(h, w, |y, x| inside(y as f64, x as f64) <= 1.0);
    let mut px: Vec<[f64; 3]> = (0..h * w)
        .map(|i| {
            let r = inside((i / w) as f64, (i % w) as f64);
            // Soft rim so the boundary is not a hard step.
            let t = ((1.1 - r) / 0.2).clamp(0.0, 1.0);
            std::array::from_fn(|k| skin[k] + (lesion[k] - skin[k]) * t)
        })
        .collect();

    let strokes = 2 + (rng.uniform(0.0, 3.0) as usize);
    for _ in 0..strokes {
        let (mut y, mut x) = (rng.uniform(0.0, hf), rng.uniform(0.0, wf));
        let mut angle = rng.uniform(0.0, std::f64::consts::TAU);
        let len = rng.uniform(0.3, 0.7) * wf;
        let dark = rng.uniform(0.05, 0.15);
        let mut walked = 0.0;
        while walked < len {
            let (yi, xi) = (y.round() as isize, x.round() as isize);
            for (oy, ox) in [(0, 0), (1, 0)] {
                let (py, pxx) = (yi + oy, xi + ox);
                if (0..h as isize).contains(&py) && (0..w as isize).contains(&pxx) {
                    px[py as usize * w + pxx as usize] = [dark; 3];
                }
            }
            angle += rng.uniform(-0.08, 0.08);
            y += angle.sin();
            x += angle.cos();
            walked += 1.0;
        }
    }

    let noise = Normal::new(0.0, 0.03).expect("valid deviation");
    let mut bytes = Vec::with_capacity(3 * h * w);
    for p in &px {
        for &v in p {
            let n: f64 = noise.sample(rng);
            bytes.push(((v + n).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let image = image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("extents match data");
    SyntheticImage { id: id.to_string(), image, mask }
}

/// `n` images `synth_0000 ..` seeded from `seed`.
pub fn synthetic_set(n: usize, h: usize, w: usize, seed: u64) -> Vec<SyntheticImage> {
    let base = Rng::new(seed);
    (0..n).map(|i| synthetic_image(&format!("synth_{i:04}"), h, w, &mut base.derive(i as u64))).collect()
}

/// Writes `<id>.png` and `<id>_segmentation.png` for each image into `dir`.
pub fn write_fixture(dir: &Path, images: &[SyntheticImage]) -> Result<(), MaskError> {
    std::fs::create_dir_all(dir).map_err(|e| crate::mask::image_err(dir, image::ImageError::IoError(e)))?;
    for s in images {
        let path = dir.join(format!("{}.png", s.id));
        s.image.save(&path).map_err(|e| crate::mask::image_err(&path, e))?;
        s.mask.save_png(&dir.join(format!("{}{MASK_SUFFIX}", s.id)))?;
    }
    Ok(())
}
