use crate::tensor::Scalar;

/// Linear-interpolated percentile of `values` (rank `p / 100 * (n - 1)`).
/// Reorders `values`.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty slice");
    let rank = (p / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    let (_, &mut v_lo, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return v_lo;
    }
    let v_hi = upper.iter().copied().fold(f64::INFINITY, f64::min);
    v_lo + (v_hi - v_lo) * frac
}

/// Maps the `lo_pct` percentile of `channel` to 0 and the `hi_pct`
/// percentile to 1, clipping to `[0, 1]`. A channel whose window collapses
/// becomes all zeros.
pub fn percentile_contrast_normalize<T: Scalar>(channel: &mut [T], lo_pct: f64, hi_pct: f64) {
    assert!((0.0..100.0).contains(&lo_pct) && lo_pct < hi_pct && hi_pct <= 100.0, "invalid percentile window");
    let mut scratch: Vec<f64> = channel.iter().map(|v| v.as_f64()).collect();
    let lo = percentile(&mut scratch, lo_pct);
    let hi = percentile(&mut scratch, hi_pct);
    if !(hi > lo) {
        channel.fill(T::zero());
        return;
    }
    let scale = 1.0 / (hi - lo);
    for v in channel.iter_mut() {
        *v = T::from_f64_lossy(((v.as_f64() - lo) * scale).clamp(0.0, 1.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![3.0, 1.0, 2.0, 4.0];
        assert_eq!(percentile(&mut v, 0.0), 1.0);
        assert_eq!(percentile(&mut v, 100.0), 4.0);
        assert!((percentile(&mut v, 50.0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn ramp_window() {
        let mut ramp: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        percentile_contrast_normalize(&mut ramp, 5.0, 95.0);
        let at = |x: f64| ((x - 0.05) / 0.9).clamp(0.0, 1.0);
        for (i, v) in ramp.iter().enumerate() {
            assert!((v - at(i as f64 / 999.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_channel_is_zeroed() {
        let mut c = vec![0.4f32; 50];
        percentile_contrast_normalize(&mut c, 5.0, 95.0);
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_span_is_identity() {
        let mut c: Vec<f64> = vec![0.0, 0.25, 1.0, 0.5];
        percentile_contrast_normalize(&mut c, 0.0, 100.0);
        assert_eq!(c, vec![0.0, 0.25, 1.0, 0.5]);
    }
}
