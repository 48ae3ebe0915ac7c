//! Dual-threshold conversion of probability maps into a single lesion mask.
//!
//! A high threshold locates the tumor center (mass-weighted centroid of the
//! heaviest component); a low threshold, after hole filling, yields the
//! candidate regions, and the one containing the center is kept.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::mask::{BinaryMask, ProbabilityMap};
use crate::pipeline::bilinear_resize;

/// Connected regions of a binary map. Labels are dense: 0 is background,
/// regions are `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRegions {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    counts: Vec<usize>,
    masses: Vec<f64>,
}

impl LabeledRegions {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn label(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Pixel count of region `label` (1-based).
    pub fn count(&self, label: u32) -> usize {
        self.counts[label as usize - 1]
    }

    /// Probability mass of region `label`; equals the pixel count when no
    /// probability map was supplied.
    pub fn mass(&self, label: u32) -> f64 {
        self.masses[label as usize - 1]
    }

    /// Region with the largest mass; ties go to the lower label.
    pub fn heaviest(&self) -> Option<u32> {
        let mut best: Option<(u32, f64)> = None;
        for (i, &m) in self.masses.iter().enumerate() {
            if best.is_none_or(|(_, bm)| m > bm) {
                best = Some((i as u32 + 1, m));
            }
        }
        best.map(|(l, _)| l)
    }

    pub fn region_mask(&self, label: u32) -> BinaryMask {
        BinaryMask::new(self.height, self.width, self.labels.iter().map(|&l| l == label).collect())
            .expect("extents match data")
    }
}

/// 8-connected labeling in raster order of first pixel. Masses are summed
/// from `prob` when given.
pub fn connected_components(mask: &BinaryMask, prob: Option<&ProbabilityMap>) -> LabeledRegions {
    let (h, w) = mask.extents();
    if let Some(p) = prob {
        assert_eq!(p.extents(), (h, w), "probability map extents differ from mask");
    }
    let fg = mask.data();
    let mut labels = vec![0u32; h * w];
    let mut counts = Vec::new();
    let mut masses = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !fg[start] || labels[start] != 0 {
            continue;
        }
        let label = counts.len() as u32 + 1;
        let (mut count, mut mass) = (0usize, 0.0f64);
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            count += 1;
            mass += prob.map_or(1.0, |p| p.data()[i]);
            let (y, x) = (i / w, i % w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if fg[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        counts.push(count);
        masses.push(mass);
    }
    LabeledRegions { height: h, width: w, labels, counts, masses }
}

/// The heaviest component above `th_high` and its rounded mass-weighted
/// centroid `(row, col)`.
fn heaviest_high_region(prob: &ProbabilityMap, th_high: f64) -> Option<(BinaryMask, (usize, usize))> {
    let regions = connected_components(&prob.threshold(th_high), Some(prob));
    let label = regions.heaviest()?;
    let w = prob.width();
    let (mut sy, mut sx, mut m) = (0.0, 0.0, 0.0);
    for (i, &l) in regions.labels().iter().enumerate() {
        if l == label {
            let p = prob.data()[i];
            sy += p * (i / w) as f64;
            sx += p * (i % w) as f64;
            m += p;
        }
    }
    let center = ((sy / m).round() as usize, (sx / m).round() as usize);
    Some((regions.region_mask(label), center))
}

/// Mass-weighted centroid `(row, col)` of the heaviest component at or
/// above `th_high`, or `None` when no pixel reaches it.
pub fn tumor_center(prob: &ProbabilityMap, th_high: f64) -> Option<(usize, usize)> {
    heaviest_high_region(prob, th_high).map(|(_, c)| c)
}

const FAR: f64 = 1e20;

/// Squared distance transform of a 1-D sampled function (lower envelope of
/// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            // z[0] is -inf, so the envelope never empties.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from each pixel to the nearest `true`
/// pixel; `FAR` everywhere when there is none.
fn squared_distance(seeds: &[bool], h: usize, w: usize) -> Vec<f64> {
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let n = h.max(w);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = d[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            d[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&d[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        d[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    d
}

/// Dilation by the disk `dx^2 + dy^2 <= radius^2`.
pub fn dilate(mask: &BinaryMask, radius: f64) -> BinaryMask {
    let (h, w) = mask.extents();
    let r2 = radius * radius;
    let d = squared_distance(mask.data(), h, w);
    BinaryMask::new(h, w, d.iter().map(|&v| v <= r2).collect()).expect("extents match data")
}

/// Erosion by the same disk; pixels outside the frame count as foreground.
pub fn erode(mask: &BinaryMask, radius: f64) -> BinaryMask {
    let (h, w) = mask.extents();
    let r2 = radius * radius;
    let background: Vec<bool> = mask.data().iter().map(|&v| !v).collect();
    let d = squared_distance(&background, h, w);
    BinaryMask::new(h, w, d.iter().map(|&v| v > r2).collect()).expect("extents match data")
}

/// Morphological closing with a disk of `radius`. The result always
/// contains the input. The mask is padded with background first so shapes
/// near the border are not pulled out to the frame.
pub fn fill_holes(mask: &BinaryMask, radius: f64) -> BinaryMask {
    if radius <= 0.0 || mask.is_empty() {
        return mask.clone();
    }
    let pad = radius.ceil() as usize + 1;
    let (h, w) = mask.extents();
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let padded = BinaryMask::from_fn(ph, pw, |y, x| {
        (pad..pad + h).contains(&y) && (pad..pad + w).contains(&x) && mask.get(y - pad, x - pad)
    });
    let closed = erode(&dilate(&padded, radius), radius);
    BinaryMask::from_fn(h, w, |y, x| closed.get(y + pad, x + pad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualThresholdConfig {
    pub th_high: f64,
    pub th_low: f64,
    /// Closing radius in pixels at network resolution.
    pub fill_radius: f64,
}

impl Default for DualThresholdConfig {
    fn default() -> Self {
        Self { th_high: 0.8, th_low: 0.5, fill_radius: 2.0 }
    }
}

impl DualThresholdConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0 < self.th_low && self.th_low <= self.th_high && self.th_high < 1.0) {
            return Err(format!("thresholds must satisfy 0 < th_low <= th_high < 1, got {} and {}", self.th_low, self.th_high));
        }
        if !(self.fill_radius >= 0.0 && self.fill_radius.is_finite()) {
            return Err(format!("fill_radius must be a non-negative number, got {}", self.fill_radius));
        }
        Ok(())
    }
}

/// Final single-region lesion mask.
///
/// The low-threshold map is hole-filled and split into 8-connected regions;
/// the region containing the tumor center is returned. If the center lands
/// on background, the region holding the heaviest high-threshold component
/// is used. Without any high-threshold pixel the heaviest low-threshold
/// region is returned, and an all-background map gives an empty mask.
pub fn dual_threshold_mask(prob: &ProbabilityMap, cfg: &DualThresholdConfig) -> BinaryMask {
    let (h, w) = prob.extents();
    let filled = fill_holes(&prob.threshold(cfg.th_low), cfg.fill_radius);
    let regions = connected_components(&filled, Some(prob));
    let label = match heaviest_high_region(prob, cfg.th_high) {
        Some((high, (cy, cx))) => match regions.label(cy, cx) {
            0 => {
                let i = high.data().iter().position(|&v| v).expect("component is non-empty");
                regions.labels()[i]
            }
            l => l,
        },
        None => match regions.heaviest() {
            Some(l) => l,
            None => return BinaryMask::empty(h, w),
        },
    };
    regions.region_mask(label)
}

/// Upsamples `prob` bilinearly to `src_h x src_w`, then applies
/// [`dual_threshold_mask`] with the fill radius scaled to match.
pub fn resize_mask_to_source(prob: &ProbabilityMap, src_h: usize, src_w: usize, cfg: &DualThresholdConfig) -> BinaryMask {
    assert!(src_h > 0 && src_w > 0, "source extents must be positive");
    let (h, w) = prob.extents();
    if (h, w) == (src_h, src_w) {
        return dual_threshold_mask(prob, cfg);
    }
    let up = bilinear_resize(&prob.to_tensor::<f64>(), src_h, src_w);
    let up = ProbabilityMap::from_tensor(&up).expect("single channel");
    let factor = ((src_h as f64 / h as f64) * (src_w as f64 / w as f64)).sqrt();
    dual_threshold_mask(&up, &DualThresholdConfig { fill_radius: cfg.fill_radius * factor, ..*cfg })
}
