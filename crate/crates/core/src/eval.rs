//! Pixel-wise segmentation metrics and dataset reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::mask::{BinaryMask, MaskError};

/// Suffix of mask file names: `<id>_segmentation.png`.
pub const MASK_SUFFIX: &str = "_segmentation.png";

/// Published mean scores of the reference method, kept as documentation
/// targets. They need the full challenge data and long GPU training, so no
/// test asserts them.
pub mod reference {
    use super::Metrics;

    /// Challenge test set.
    pub const TEST: Metrics = Metrics { ac: 0.934, di: 0.849, ja: 0.765, se: 0.825, sp: 0.975 };
    /// Challenge validation set.
    pub const VALIDATION: Metrics = Metrics { ac: 0.953, di: 0.865, ja: 0.783, se: 0.879, sp: 0.979 };
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("mask extents differ: prediction {pred:?}, truth {truth:?}")]
    Extents { pred: (usize, usize), truth: (usize, usize) },
    #[error("no counterpart for ids: {}", .0.join(", "))]
    Unmatched(Vec<String>),
    #[error("no masks found in {0}")]
    Empty(String),
    #[error("image `{id}`: {source}")]
    Mask { id: String, source: MaskError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts, EvalError> {
    if pred.extents() != truth.extents() {
        return Err(EvalError::Extents { pred: pred.extents(), truth: truth.extents() });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Accuracy, Dice, Jaccard, sensitivity and specificity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub ac: f64,
    pub di: f64,
    pub ja: f64,
    pub se: f64,
    pub sp: f64,
}

impl Metrics {
    pub fn as_array(&self) -> [f64; 5] {
        [self.ac, self.di, self.ja, self.se, self.sp]
    }
}

/// Closed-form metrics. Empty denominators resolve to: SE = 1 without
/// positives in the truth, SP = 1 without negatives, JA = DI = 1 when both
/// masks are empty.
pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Metrics {
        ac: ratio(c.tp + c.tn, c.total()),
        di: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        ja: ratio(c.tp, c.tp + c.fp + c.fn_),
        se: ratio(c.tp, c.tp + c.fn_),
        sp: ratio(c.tn, c.tn + c.fp),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub id: String,
    pub metrics: Metrics,
}

/// Per-image metrics ordered by id, plus their unweighted means.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn new(mut rows: Vec<MetricsRow>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        Self { rows }
    }

    /// Column means; `None` for an empty report.
    pub fn mean(&self) -> Option<Metrics> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let mut sum = [0.0; 5];
        for r in &self.rows {
            for (s, v) in sum.iter_mut().zip(r.metrics.as_array()) {
                *s += v;
            }
        }
        let [ac, di, ja, se, sp] = sum.map(|s| s / n);
        Some(Metrics { ac, di, ja, se, sp })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,AC,DI,JA,SE,SP\n");
        let mut line = |id: &str, m: &Metrics| {
            let _ = writeln!(out, "{id},{:.4},{:.4},{:.4},{:.4},{:.4}", m.ac, m.di, m.ja, m.se, m.sp);
        };
        for r in &self.rows {
            line(&r.id, &r.metrics);
        }
        if let Some(m) = self.mean() {
            line("MEAN", &m);
        }
        out
    }
}

/// Metrics for `(id, prediction, truth)` triples, computed in parallel.
pub fn evaluate_masks(items: &[(String, BinaryMask, BinaryMask)]) -> Result<MetricsReport, EvalError> {
    let rows = items
        .par_iter()
        .map(|(id, p, t)| Ok(MetricsRow { id: id.clone(), metrics: metrics(&confusion(p, t)?) }))
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(MetricsReport::new(rows))
}

/// Ids of `<id>_segmentation.png` files in `dir`.
pub fn mask_ids(dir: &Path) -> Result<BTreeMap<String, std::path::PathBuf>, EvalError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(id) = name.strip_suffix(MASK_SUFFIX) {
            out.insert(id.to_string(), path.clone());
        }
    }
    Ok(out)
}

/// Compares every `<id>_segmentation.png` in `pred_dir` with the file of
/// the same name in `truth_dir`.
pub fn evaluate_dataset(pred_dir: &Path, truth_dir: &Path) -> Result<MetricsReport, EvalError> {
    let preds = mask_ids(pred_dir)?;
    let truths = mask_ids(truth_dir)?;
    if truths.is_empty() {
        return Err(EvalError::Empty(truth_dir.display().to_string()));
    }
    let unmatched: Vec<String> = truths
        .keys()
        .filter(|k| !preds.contains_key(*k))
        .chain(preds.keys().filter(|k| !truths.contains_key(*k)))
        .cloned()
        .collect();
    if !unmatched.is_empty() {
        return Err(EvalError::Unmatched(unmatched));
    }
    let items = truths
        .par_iter()
        .map(|(id, truth_path)| {
            let load = |p: &Path| BinaryMask::load_png(p).map_err(|source| EvalError::Mask { id: id.clone(), source });
            Ok((id.clone(), load(&preds[id])?, load(truth_path)?))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    evaluate_masks(&items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crafted() -> (BinaryMask, BinaryMask) {
        // Pixel k of 100: truth on k < 55, prediction on 5 <= k < 60.
        let truth = BinaryMask::from_fn(10, 10, |y, x| y * 10 + x < 55);
        let pred = BinaryMask::from_fn(10, 10, |y, x| (5..60).contains(&(y * 10 + x)));
        (pred, truth)
    }

    #[test]
    fn crafted_counts_and_metrics() {
        let (pred, truth) = crafted();
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 50, tn: 40, fp: 5, fn_: 5 });
        let m = metrics(&c);
        assert_eq!(m.ac, 0.9);
        assert!((m.di - 100.0 / 110.0).abs() < 1e-15);
        assert!((m.ja - 50.0 / 60.0).abs() < 1e-15);
        assert!((m.se - 50.0 / 55.0).abs() < 1e-15);
        assert!((m.sp - 40.0 / 45.0).abs() < 1e-15);
    }

    #[test]
    fn identity_and_complement() {
        let (_, truth) = crafted();
        let c = confusion(&truth, &truth).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let inv = BinaryMask::new(10, 10, truth.data().iter().map(|&v| !v).collect()).unwrap();
        let c = confusion(&inv, &truth).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert!(confusion(&BinaryMask::empty(3, 3), &truth).is_err());
    }

    #[test]
    fn degenerate_conventions() {
        let all = metrics(&ConfusionCounts { tp: 10, tn: 0, fp: 0, fn_: 0 });
        assert_eq!(all.as_array(), [1.0; 5]);
        let none = metrics(&ConfusionCounts { tp: 0, tn: 10, fp: 0, fn_: 0 });
        assert_eq!(none.as_array(), [1.0; 5]);
        let missed = metrics(&ConfusionCounts { tp: 0, tn: 5, fp: 0, fn_: 5 });
        assert_eq!((missed.se, missed.ja, missed.di), (0.0, 0.0, 0.0));
    }

    #[test]
    fn report_means_and_csv() {
        let row = |id: &str, ja: f64| MetricsRow { id: id.into(), metrics: Metrics { ac: 1.0, di: 1.0, ja, se: 1.0, sp: 1.0 } };
        let r = MetricsReport::new(vec![row("b", 0.8), row("a", 0.6)]);
        assert!((r.mean().unwrap().ja - 0.7).abs() < 1e-15);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "image_id,AC,DI,JA,SE,SP");
        assert!(lines[1].starts_with("a,") && lines[2].starts_with("b,"));
        assert_eq!(lines[3], "MEAN,1.0000,1.0000,0.7000,1.0000,1.0000");
    }

    #[test]
    fn dataset_matching() {
        let dir = tempfile::tempdir().unwrap();
        let (pd, td) = (dir.path().join("p"), dir.path().join("t"));
        std::fs::create_dir_all(&pd).unwrap();
        std::fs::create_dir_all(&td).unwrap();
        let (pred, truth) = crafted();
        truth.save_png(&td.join("img1_segmentation.png")).unwrap();
        truth.save_png(&td.join("img2_segmentation.png")).unwrap();
        pred.save_png(&pd.join("img1_segmentation.png")).unwrap();
        match evaluate_dataset(&pd, &td) {
            Err(EvalError::Unmatched(ids)) => assert_eq!(ids, vec!["img2".to_string()]),
            other => panic!("{other:?}"),
        }
        truth.save_png(&pd.join("img2_segmentation.png")).unwrap();
        let r = evaluate_dataset(&pd, &td).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[1].metrics.ja, 1.0);
    }
}
