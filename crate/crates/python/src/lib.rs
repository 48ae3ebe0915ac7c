//! Python bindings: architecture info, metrics, post-processing and
//! ensemble prediction from saved weight files.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use lesionseg::dataset::ManifestEntry;
use lesionseg::eval::{self, ConfusionCounts, Metrics};
use lesionseg::mask::{BinaryMask, ProbabilityMap};
use lesionseg::model::{build_cdnn29_scaled, count_parameters, ModelState};
use lesionseg::pipeline::{hsv_pixel, lab_lightness_pixel, RgbImage};
use lesionseg::postprocess::{self, DualThresholdConfig};
use lesionseg::train::{self, JaccardLossConfig};
use lesionseg::Tensor;
use lesionseg_cli::{load_weights, predict_maps, CliError};

type Grid<T> = Vec<Vec<T>>;
type MetricTuple = (f64, f64, f64, f64, f64);
type MetricRow = (String, f64, f64, f64, f64, f64);

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Config(_) => value_err(e),
        _ => runtime_err(e),
    }
}

fn extents<T>(rows: &Grid<T>) -> PyResult<(usize, usize)> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(value_err("expected a non-empty rectangular 2-D list"));
    }
    Ok((h, w))
}

fn to_mask(rows: &Grid<bool>) -> PyResult<BinaryMask> {
    let (h, w) = extents(rows)?;
    BinaryMask::new(h, w, rows.concat()).map_err(value_err)
}

fn to_prob(rows: &Grid<f64>) -> PyResult<ProbabilityMap> {
    let (h, w) = extents(rows)?;
    ProbabilityMap::new(h, w, rows.concat()).map_err(value_err)
}

fn mask_rows(m: &BinaryMask) -> Grid<bool> {
    m.data().chunks(m.width()).map(<[bool]>::to_vec).collect()
}

fn metric_tuple(m: Metrics) -> MetricTuple {
    (m.ac, m.di, m.ja, m.se, m.sp)
}

fn threshold_config(th_high: f64, th_low: f64, fill_radius: f64) -> PyResult<DualThresholdConfig> {
    let cfg = DualThresholdConfig { th_high, th_low, fill_radius };
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Trainable parameter count of the network with feature counts divided by
/// `width_divisor`.
#[pyfunction]
#[pyo3(signature = (width_divisor = 1))]
fn parameter_count(width_divisor: usize) -> usize {
    count_parameters(&build_cdnn29_scaled(width_divisor))
}

/// `(AC, DI, JA, SE, SP)` from confusion counts.
#[pyfunction]
fn metrics_from_counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> MetricTuple {
    metric_tuple(eval::metrics(&ConfusionCounts { tp, tn, fp, fn_ }))
}

/// `(AC, DI, JA, SE, SP)` of a predicted mask against the truth.
#[pyfunction]
fn mask_metrics(pred: Grid<bool>, truth: Grid<bool>) -> PyResult<MetricTuple> {
    let c = eval::confusion(&to_mask(&pred)?, &to_mask(&truth)?).map_err(value_err)?;
    Ok(metric_tuple(eval::metrics(&c)))
}

/// Per-image rows `(id, AC, DI, JA, SE, SP)` for two folders of
/// `<id>_segmentation.png` masks.
#[pyfunction]
fn evaluate_dirs(pred_dir: PathBuf, truth_dir: PathBuf) -> PyResult<Vec<MetricRow>> {
    let report = eval::evaluate_dataset(&pred_dir, &truth_dir).map_err(runtime_err)?;
    Ok(report
        .rows
        .into_iter()
        .map(|r| {
            let m = r.metrics;
            (r.id, m.ac, m.di, m.ja, m.se, m.sp)
        })
        .collect())
}

/// `(H, S, V)` of one RGB pixel in `[0, 1]`; hue is scaled to `[0, 1)`.
#[pyfunction]
fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    hsv_pixel(r, g, b)
}

/// CIELAB lightness `L*` in `[0, 100]` of one sRGB pixel in `[0, 1]`.
#[pyfunction]
fn lab_lightness(r: f64, g: f64, b: f64) -> f64 {
    lab_lightness_pixel(r, g, b)
}

/// Smoothed Jaccard distance between a binary target and predictions.
#[pyfunction]
#[pyo3(signature = (target, pred, smooth = 1.0))]
fn jaccard_loss(target: Vec<f64>, pred: Vec<f64>, smooth: f64) -> PyResult<f64> {
    let t = Tensor::from_vec(&[target.len()], target).map_err(value_err)?;
    let p = Tensor::from_vec(&[pred.len()], pred).map_err(value_err)?;
    train::jaccard_loss(&t, &p, &JaccardLossConfig { smooth }).map_err(value_err)
}

/// `k` pairs of sorted `(train, val)` index lists.
#[pyfunction]
fn kfold_split(n_items: usize, k: usize, seed: u64) -> PyResult<Vec<(Vec<usize>, Vec<usize>)>> {
    let folds = train::kfold_split(n_items, k, seed).map_err(value_err)?;
    Ok(folds.into_iter().map(|f| (f.train, f.val)).collect())
}

/// Lesion mask from a probability map: the low-threshold region around the
/// high-threshold center, with holes up to `fill_radius` closed.
#[pyfunction]
#[pyo3(signature = (prob, th_high = 0.8, th_low = 0.5, fill_radius = 2.0))]
fn dual_threshold_mask(prob: Grid<f64>, th_high: f64, th_low: f64, fill_radius: f64) -> PyResult<Grid<bool>> {
    let cfg = threshold_config(th_high, th_low, fill_radius)?;
    Ok(mask_rows(&postprocess::dual_threshold_mask(&to_prob(&prob)?, &cfg)))
}

/// Probability-weighted center `(row, col)` of the heaviest region above
/// `th_high`, or `None`.
#[pyfunction]
#[pyo3(signature = (prob, th_high = 0.8))]
fn tumor_center(prob: Grid<f64>, th_high: f64) -> PyResult<Option<(usize, usize)>> {
    Ok(postprocess::tumor_center(&to_prob(&prob)?, th_high))
}

/// An ensemble of trained networks loaded from weight files.
#[pyclass]
struct Ensemble {
    models: Vec<ModelState<f32>>,
}

#[pymethods]
impl Ensemble {
    #[new]
    fn new(paths: Vec<PathBuf>) -> PyResult<Self> {
        if paths.is_empty() {
            return Err(value_err("at least one weight file is required"));
        }
        let models = paths.iter().map(|p| load_weights(p)).collect::<Result<Vec<_>, _>>().map_err(cli_err)?;
        Ok(Self { models })
    }

    fn __len__(&self) -> usize {
        self.models.len()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.models[0].parameter_count()
    }

    /// Averaged probability map at network resolution.
    fn probability_map(&self, image_path: PathBuf) -> PyResult<Grid<f64>> {
        let (map, _) = self.map_for(&image_path)?;
        Ok(map.data().chunks(map.width()).map(<[f64]>::to_vec).collect())
    }

    /// Binary lesion mask at the image's own resolution.
    #[pyo3(signature = (image_path, th_high = 0.8, th_low = 0.5, fill_radius = 2.0))]
    fn segment(&self, image_path: PathBuf, th_high: f64, th_low: f64, fill_radius: f64) -> PyResult<Grid<bool>> {
        let cfg = threshold_config(th_high, th_low, fill_radius)?;
        let (map, entry) = self.map_for(&image_path)?;
        Ok(mask_rows(&postprocess::resize_mask_to_source(&map, entry.height, entry.width, &cfg)))
    }
}

impl Ensemble {
    fn map_for(&self, path: &Path) -> PyResult<(ProbabilityMap, ManifestEntry)> {
        let img = RgbImage::<f32>::load(path).map_err(runtime_err)?;
        let entry = ManifestEntry {
            id: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            image_path: path.to_path_buf(),
            mask_path: None,
            height: img.height(),
            width: img.width(),
        };
        let mut maps = predict_maps(&self.models, std::slice::from_ref(&entry), 1).map_err(cli_err)?;
        Ok((maps.remove(0), entry))
    }
}

#[pymodule]
fn lesionseg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(parameter_count, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_from_counts, m)?)?;
    m.add_function(wrap_pyfunction!(mask_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_dirs, m)?)?;
    m.add_function(wrap_pyfunction!(rgb_to_hsv, m)?)?;
    m.add_function(wrap_pyfunction!(lab_lightness, m)?)?;
    m.add_function(wrap_pyfunction!(jaccard_loss, m)?)?;
    m.add_function(wrap_pyfunction!(kfold_split, m)?)?;
    m.add_function(wrap_pyfunction!(dual_threshold_mask, m)?)?;
    m.add_function(wrap_pyfunction!(tumor_center, m)?)?;
    m.add_class::<Ensemble>()?;
    Ok(())
}
