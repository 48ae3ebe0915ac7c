//! Run configuration: a TOML file with dotted keys, then `key=value`
//! overrides, then dedicated command-line flags.

use std::path::{Path, PathBuf};

use lesionseg::postprocess::DualThresholdConfig;
use lesionseg::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Images, with `<id>_segmentation.png` masks beside them unless
    /// `mask_dir` is set.
    pub train_dir: Option<PathBuf>,
    pub mask_dir: Option<PathBuf>,
    /// Optional held-out set for `train`; masks beside the images.
    pub val_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Divides every layer's feature count; 1 is the full network.
    pub width_divisor: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { width_divisor: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalConfig {
    /// Also train one model on every image after the folds.
    pub include_full_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Worker threads; 0 picks the machine default.
    pub threads: usize,
    /// Single worker thread.
    pub deterministic: bool,
    /// Images per inference batch.
    pub predict_batch: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self { threads: 0, deterministic: false, predict_batch: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub postprocess: DualThresholdConfig,
    pub crossval: CrossvalConfig,
    pub runtime: RuntimeConfig,
}

fn config_err(msg: impl std::fmt::Display) -> CliError {
    CliError::Config(msg.to_string())
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| config_err(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| config_err(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any) and applies `KEY=VALUE` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>().map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| config_err(format!("override `{o}` is not KEY=VALUE")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !matches!(self.model.width_divisor, 1 | 2 | 4 | 8 | 16) {
            return Err(config_err(format!("model.width_divisor must be 1, 2, 4, 8 or 16, got {}", self.model.width_divisor)));
        }
        self.postprocess.validate().map_err(config_err)?;
        self.train.augmentation.validate().map_err(config_err)?;
        if self.runtime.predict_batch == 0 {
            return Err(config_err("runtime.predict_batch must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
