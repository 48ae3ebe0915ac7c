use std::path::{Path, PathBuf};
use std::process::Command;

use lesionseg::eval::MASK_SUFFIX;
use lesionseg::mask::BinaryMask;
use lesionseg::synthetic::{synthetic_set, write_fixture};
use lesionseg_cli::{cmd_crossval, cmd_evaluate, cmd_predict, cmd_train, CliError, RunConfig};

fn fixture(dir: &Path, n: usize) -> PathBuf {
    let data = dir.join("data");
    write_fixture(&data, &synthetic_set(n, 48, 64, 21)).unwrap();
    data
}

fn quick(data: &Path, extra: &[&str]) -> RunConfig {
    let mut o = vec![
        format!("data.train_dir={}", data.display()),
        "model.width_divisor=16".to_string(),
        "train.batch_size=2".to_string(),
        "train.epochs=1".to_string(),
        "runtime.deterministic=true".to_string(),
    ];
    o.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::load(None, &o).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lesionseg"))
}

#[test]
fn train_writes_one_loss_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 4);
    let out = cmd_train(&quick(&data, &["train.epochs=5"]), &dir.path().join("run")).unwrap();
    let csv = std::fs::read_to_string(&out.loss_csv).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_loss");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("5,"));
    let log = std::fs::read_to_string(&out.log).unwrap();
    assert!(log.contains("seed = 0"));
    assert!(log.contains("epochs = 5"));
}

#[test]
fn train_with_validation_records_both_curves() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 4);
    let val = dir.path().join("val");
    write_fixture(&val, &synthetic_set(2, 48, 64, 99)).unwrap();
    let cfg = quick(&data, &[&format!("data.val_dir={}", val.display())]);
    let out = cmd_train(&cfg, &dir.path().join("run")).unwrap();
    assert!(out.curve.epochs.iter().all(|e| e.val_loss.is_some()));
}

#[test]
fn training_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 4);
    let read = |cfg: &RunConfig, name: &str| std::fs::read(cmd_train(cfg, &dir.path().join(name)).unwrap().weights).unwrap();
    let cfg = quick(&data, &["train.seed=3"]);
    assert_eq!(read(&cfg, "a"), read(&cfg, "b"));
    assert_ne!(read(&cfg, "a"), read(&quick(&data, &["train.seed=4"]), "c"));
}

#[test]
fn oversized_batch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 3);
    let err = cmd_train(&quick(&data, &["train.batch_size=8"]), &dir.path().join("run")).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn crossval_two_folds_on_four_images() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 4);
    let out_dir = dir.path().join("cv");
    let out = cmd_crossval(&quick(&data, &["train.folds=2"]), &out_dir).unwrap();
    assert_eq!(out.folds.len(), 2);
    assert!(out.full_model.is_none());
    let weights: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "weights"))
        .collect();
    assert_eq!(weights.len(), 2);
    assert!(out.folds.iter().all(|f| f.report.rows.len() == 2));
    let summary = std::fs::read_to_string(&out.summary_csv).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().last().unwrap().starts_with("MEAN,4,"));
}

#[test]
fn crossval_can_add_the_full_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 4);
    let out = cmd_crossval(&quick(&data, &["train.folds=2", "crossval.include_full_model=true"]), &dir.path().join("cv")).unwrap();
    assert!(out.full_model.unwrap().exists());
}

#[test]
fn ensemble_predict_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 3);
    let a = cmd_train(&quick(&data, &["train.seed=1"]), &dir.path().join("a")).unwrap();
    let b = cmd_train(&quick(&data, &["train.seed=2"]), &dir.path().join("b")).unwrap();
    let pred = dir.path().join("pred");
    let cfg = quick(&data, &[]);
    let out = cmd_predict(&cfg, &[a.weights, b.weights], &data, &pred, true).unwrap();
    assert_eq!(out.masks.len(), 3);
    assert_eq!(out.probability_maps.len(), 3);
    for m in &out.masks {
        assert_eq!(BinaryMask::load_png(m).unwrap().extents(), (48, 64));
    }
    let csv = dir.path().join("report").join("metrics.csv");
    let report = cmd_evaluate(&pred, &data, Some(&csv)).unwrap();
    assert_eq!(report.rows.len(), 3);
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("image_id,AC,DI,JA,SE,SP\n"));
    assert!(text.lines().last().unwrap().starts_with("MEAN,"));
}

#[test]
fn evaluating_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 3);
    let mean = cmd_evaluate(&data, &data, None).unwrap().mean().unwrap();
    assert_eq!(mean.as_array(), [1.0; 5]);
}

#[test]
fn missing_prediction_names_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 3);
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    for id in ["synth_0000", "synth_0001"] {
        std::fs::copy(data.join(format!("{id}{MASK_SUFFIX}")), pred.join(format!("{id}{MASK_SUFFIX}"))).unwrap();
    }
    let err = cmd_evaluate(&pred, &data, None).unwrap_err();
    assert!(err.to_string().contains("synth_0002"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn binary_reports_parameter_count() {
    let out = bin().arg("info").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("trainable parameters: 5039457"));
    assert!(text.contains("decv-5-1"));
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 2);
    let out = dir.path().join("run");
    let status = |args: &[&str]| bin().args(args).output().unwrap().status.code();

    let data_arg = data.to_str().unwrap();
    let out_arg = out.to_str().unwrap();
    assert_eq!(status(&["train", "--data", data_arg, "--out", out_arg, "--set", "train.batch_size=5"]), Some(2));
    assert_eq!(status(&["train", "--data", data_arg, "--out", out_arg, "--set", "train.nonsense=1"]), Some(2));
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(status(&["train", "--data", empty.to_str().unwrap(), "--out", out_arg]), Some(3));
    assert_eq!(status(&["evaluate", "--pred", empty.to_str().unwrap(), "--truth", data_arg]), Some(3));
}

#[test]
fn binary_train_with_flags_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 2);
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "[model]\nwidth_divisor = 16\n\n[train]\nbatch_size = 2\nepochs = 3\n").unwrap();
    let out = dir.path().join("run");
    let result = bin()
        .args(["train", "--config", config.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(["--seed", "11", "--deterministic", "--set", "train.epochs=2"])
        .output()
        .unwrap();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert_eq!(std::fs::read_to_string(out.join("loss.csv")).unwrap().lines().count(), 3);
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("seed = 11"));
    assert!(log.contains("deterministic = true"));
}
