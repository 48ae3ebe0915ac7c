//! Training, cross-validation, prediction and evaluation workflows behind
//! the `lesionseg` command.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lesionseg::dataset::{self, DatasetError, DatasetManifest, ManifestEntry};
use lesionseg::eval::{self, EvalError, Metrics, MetricsReport, MetricsRow, MASK_SUFFIX};
use lesionseg::mask::{BinaryMask, MaskError, ProbabilityMap};
use lesionseg::model::{self, build_cdnn29_scaled, count_parameters, ArchitectureSpec, ModelError, ModelState, WeightFile};
use lesionseg::pipeline::{normalize_contrast, DEFAULT_WINDOW};
use lesionseg::postprocess::resize_mask_to_source;
use lesionseg::train::{self, kfold_split, LossCurve, Sample, TrainError};
use lesionseg::{Rng, Tensor};

pub use config::RunConfig;

/// Width divisors tried when matching a weight file to an architecture.
pub const WIDTH_DIVISORS: [usize; 5] = [1, 2, 4, 8, 16];

const INIT_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const FOLD_STREAM_BASE: u64 = 100;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(lesionseg::TensorError::NonFinite { .. }) => CliError::Numeric(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Invalid(m) => CliError::Config(m),
            TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Sizes the global worker pool. Only the first call in a process takes
/// effect.
pub fn init_runtime(cfg: &RunConfig) {
    let threads = if cfg.runtime.deterministic { 1 } else { cfg.runtime.threads };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

fn architecture(cfg: &RunConfig) -> ArchitectureSpec {
    build_cdnn29_scaled(cfg.model.width_divisor)
}

fn run_log(cfg: &RunConfig, command: &str, extra: &str) -> String {
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!(
        "command = {command}\nstarted_unix = {secs}\nseed = {}\n{extra}\n# resolved configuration\n{}",
        cfg.train.seed,
        cfg.to_toml()
    )
}

fn train_manifest(cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    let dir = cfg.data.train_dir.as_deref().ok_or_else(|| CliError::Config("data.train_dir is not set".into()))?;
    let manifest = dataset::ingest_split(dir, Some(cfg.data.mask_dir.as_deref().unwrap_or(dir)), "train")?;
    manifest.require_masks()?;
    Ok(manifest)
}

fn load(manifest: &DatasetManifest, spec: &ArchitectureSpec) -> Result<Vec<Sample<f32>>, CliError> {
    Ok(dataset::load_samples(manifest, spec.input_height, spec.input_width)?)
}

/// Artifacts written by [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub weights: PathBuf,
    pub loss_csv: PathBuf,
    pub log: PathBuf,
    pub curve: LossCurve,
}

/// Trains one model on `data.train_dir`, validating on `data.val_dir`
/// when set. Writes `model.weights`, `loss.csv` and `run.log` to `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainOutputs, CliError> {
    let manifest = train_manifest(cfg)?;
    cfg.train.validate(manifest.len())?;
    let val_manifest = match &cfg.data.val_dir {
        Some(dir) => {
            let m = dataset::ingest_split(dir, Some(dir), "val")?;
            m.require_masks()?;
            Some(m)
        }
        None => None,
    };
    create_dir(out)?;
    let log_path = out.join("run.log");
    write_file(&log_path, &run_log(cfg, "train", &format!("images = {}", manifest.len())))?;
    log::info!("training on {} images, seed {}", manifest.len(), cfg.train.seed);

    let spec = architecture(cfg);
    let samples = load(&manifest, &spec)?;
    let root = Rng::new(cfg.train.seed);
    let model: ModelState<f32> = model::init_model(&spec, &mut root.derive(INIT_STREAM))?;
    let rng = root.derive(TRAIN_STREAM);
    let (trained, curve) = match &val_manifest {
        Some(vm) => train::train_fold(model, &samples, &load(vm, &spec)?, &cfg.train, &rng)?,
        None => train::train_full(model, &samples, &cfg.train, &rng)?,
    };
    let weights = out.join("model.weights");
    model::save_model(&trained, &weights)?;
    let loss_csv = out.join("loss.csv");
    write_file(&loss_csv, &curve.to_csv())?;
    Ok(TrainOutputs { weights, loss_csv, log: log_path, curve })
}

/// Per-fold results of [`cmd_crossval`].
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub weights: PathBuf,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct CrossvalOutputs {
    pub folds: Vec<FoldResult>,
    pub full_model: Option<PathBuf>,
    pub summary_csv: PathBuf,
}

fn summary_csv(folds: &[FoldResult]) -> String {
    let mut out = String::from("fold,images,AC,DI,JA,SE,SP\n");
    let means: Vec<Metrics> = folds.iter().filter_map(|f| f.report.mean()).collect();
    for (k, (f, m)) in folds.iter().zip(&means).enumerate() {
        let _ = writeln!(out, "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}", k + 1, f.report.rows.len(), m.ac, m.di, m.ja, m.se, m.sp);
    }
    let n = means.len() as f64;
    let avg = |g: fn(&Metrics) -> f64| means.iter().map(g).sum::<f64>() / n;
    let _ = writeln!(
        out,
        "MEAN,{},{:.4},{:.4},{:.4},{:.4},{:.4}",
        folds.iter().map(|f| f.report.rows.len()).sum::<usize>(),
        avg(|m| m.ac),
        avg(|m| m.di),
        avg(|m| m.ja),
        avg(|m| m.se),
        avg(|m| m.sp)
    );
    out
}

/// k-fold cross-validation: one model per fold, each scored through the
/// full prediction pipeline on its held-out images at source resolution.
pub fn cmd_crossval(cfg: &RunConfig, out: &Path) -> Result<CrossvalOutputs, CliError> {
    let manifest = train_manifest(cfg)?;
    let folds = kfold_split(manifest.len(), cfg.train.folds, cfg.train.seed)?;
    for f in &folds {
        cfg.train.validate(f.train.len())?;
    }
    create_dir(out)?;
    write_file(
        &out.join("run.log"),
        &run_log(cfg, "crossval", &format!("images = {}\nfolds = {}", manifest.len(), folds.len())),
    )?;
    let spec = architecture(cfg);
    let samples = load(&manifest, &spec)?;
    let root = Rng::new(cfg.train.seed);

    let mut results = Vec::with_capacity(folds.len());
    for (k, fold) in folds.iter().enumerate() {
        log::info!("fold {}/{}: {} train, {} val", k + 1, folds.len(), fold.train.len(), fold.val.len());
        let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
        let fold_rng = root.derive(FOLD_STREAM_BASE + k as u64);
        let model: ModelState<f32> = model::init_model(&spec, &mut fold_rng.derive(INIT_STREAM))?;
        let (trained, curve) = train::train_fold(model, &pick(&fold.train), &pick(&fold.val), &cfg.train, &fold_rng.derive(TRAIN_STREAM))?;
        let weights = out.join(format!("fold_{}.weights", k + 1));
        model::save_model(&trained, &weights)?;
        write_file(&out.join(format!("fold_{}_loss.csv", k + 1)), &curve.to_csv())?;
        let val = manifest.select(&fold.val);
        let report = score(&[trained], &val, cfg)?;
        write_file(&out.join(format!("fold_{}_metrics.csv", k + 1)), &report.to_csv())?;
        results.push(FoldResult { weights, report });
    }
    let summary_path = out.join("summary.csv");
    write_file(&summary_path, &summary_csv(&results))?;

    let full_model = if cfg.crossval.include_full_model {
        cfg.train.validate(samples.len())?;
        let full_rng = root.derive(FOLD_STREAM_BASE + folds.len() as u64);
        let model: ModelState<f32> = model::init_model(&spec, &mut full_rng.derive(INIT_STREAM))?;
        let (trained, curve) = train::train_full(model, &samples, &cfg.train, &full_rng.derive(TRAIN_STREAM))?;
        let path = out.join("full.weights");
        model::save_model(&trained, &path)?;
        write_file(&out.join("full_loss.csv"), &curve.to_csv())?;
        Some(path)
    } else {
        None
    };
    Ok(CrossvalOutputs { folds: results, full_model, summary_csv: summary_path })
}

/// Loads a weight file, matching its fingerprint against the built-in
/// architectures.
pub fn load_weights(path: &Path) -> Result<ModelState<f32>, CliError> {
    let file = WeightFile::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let spec = WIDTH_DIVISORS
        .iter()
        .map(|&d| build_cdnn29_scaled(d))
        .find(|s| s.fingerprint() == file.fingerprint)
        .ok_or_else(|| CliError::Data(format!("{}: architecture fingerprint {:016x} is unknown", path.display(), file.fingerprint)))?;
    file.into_state(&spec).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Ensemble probability maps at network resolution, one per entry.
pub fn predict_maps(models: &[ModelState<f32>], entries: &[ManifestEntry], batch: usize) -> Result<Vec<ProbabilityMap>, CliError> {
    let spec = models.first().ok_or_else(|| CliError::Config("no models given".into()))?.spec().clone();
    let (h, w) = (spec.input_height, spec.input_width);
    let mut maps = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(batch.max(1)) {
        let inputs = chunk
            .iter()
            .map(|e| {
                let mut x = dataset::load_input::<f32>(e, h, w)?;
                normalize_contrast(&mut x, DEFAULT_WINDOW.0, DEFAULT_WINDOW.1);
                Ok(x)
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut data = Vec::with_capacity(inputs.len() * inputs[0].len());
        for x in &inputs {
            data.extend_from_slice(x.data());
        }
        let batch = Tensor::from_vec(&[inputs.len(), spec.input_channels, h, w], data).map_err(ModelError::from)?;
        maps.extend(train::ensemble_predict_maps(models, &batch)?);
    }
    Ok(maps)
}

fn score(models: &[ModelState<f32>], manifest: &DatasetManifest, cfg: &RunConfig) -> Result<MetricsReport, CliError> {
    let maps = predict_maps(models, &manifest.entries, cfg.runtime.predict_batch)?;
    let mut rows = Vec::with_capacity(maps.len());
    for (e, p) in manifest.entries.iter().zip(&maps) {
        let pred = resize_mask_to_source(p, e.height, e.width, &cfg.postprocess);
        let truth = BinaryMask::load_png(e.mask_path.as_ref().expect("masks checked"))?;
        rows.push(MetricsRow { id: e.id.clone(), metrics: eval::metrics(&eval::confusion(&pred, &truth)?) });
    }
    Ok(MetricsReport::new(rows))
}

/// Files written by [`cmd_predict`].
#[derive(Debug, Clone)]
pub struct PredictOutputs {
    pub masks: Vec<PathBuf>,
    pub probability_maps: Vec<PathBuf>,
}

/// Writes `<id>_segmentation.png` at source extents for every image in
/// `images`, averaging all `models`. With `probmaps`, also writes
/// `<id>_probability.png` at network resolution.
pub fn cmd_predict(cfg: &RunConfig, models: &[PathBuf], images: &Path, out: &Path, probmaps: bool) -> Result<PredictOutputs, CliError> {
    if models.is_empty() {
        return Err(CliError::Config("at least one --models path is required".into()));
    }
    let states = models.iter().map(|p| load_weights(p)).collect::<Result<Vec<_>, _>>()?;
    let manifest = dataset::ingest_split(images, None, "predict")?;
    create_dir(out)?;
    log::info!("predicting {} images with {} model(s)", manifest.len(), states.len());
    let maps = predict_maps(&states, &manifest.entries, cfg.runtime.predict_batch)?;
    let mut outputs = PredictOutputs { masks: Vec::new(), probability_maps: Vec::new() };
    for (e, p) in manifest.entries.iter().zip(&maps) {
        let mask = resize_mask_to_source(p, e.height, e.width, &cfg.postprocess);
        let path = out.join(format!("{}{MASK_SUFFIX}", e.id));
        mask.save_png(&path)?;
        outputs.masks.push(path);
        if probmaps {
            let path = out.join(format!("{}_probability.png", e.id));
            p.save_png(&path)?;
            outputs.probability_maps.push(path);
        }
    }
    Ok(outputs)
}

/// Scores `<id>_segmentation.png` files in `pred` against `truth`, writes
/// the CSV report to `out_csv` when given, and returns the report.
pub fn cmd_evaluate(pred: &Path, truth: &Path, out_csv: Option<&Path>) -> Result<MetricsReport, CliError> {
    let report = eval::evaluate_dataset(pred, truth)?;
    if let Some(path) = out_csv {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_file(path, &report.to_csv())?;
    }
    Ok(report)
}

/// Layer table and trainable parameter count.
pub fn cmd_info(cfg: &RunConfig) -> String {
    let spec = architecture(cfg);
    format!("{spec}\ntrainable parameters: {}\nfingerprint: {:016x}\n", count_parameters(&spec), spec.fingerprint())
}

/// The header and mean row of a report, as printed by `evaluate`.
pub fn format_mean(report: &MetricsReport) -> String {
    let csv = report.to_csv();
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    let mean = lines.last().unwrap_or_default();
    format!("{header}\n{mean}")
}
