//! Dataset folders: `<id>.jpg|jpeg|png` images paired with
//! `<id>_segmentation.png` masks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::eval::MASK_SUFFIX;
use crate::mask::{BinaryMask, MaskError};
use crate::pipeline::{compose_channels, resize_mask, PipelineError, RgbImage};
use crate::tensor::Scalar;
use crate::train::Sample;

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("duplicate image id `{id}`: {first} and {second}")]
    DuplicateId { id: String, first: PathBuf, second: PathBuf },
    #[error("mask {path} is {found:?} but its image is {expected:?}")]
    MaskExtents { path: PathBuf, expected: (usize, usize), found: (usize, usize) },
    #[error("image `{0}` has no mask")]
    MissingMask(String),
    #[error("no images found in {0}")]
    Empty(PathBuf),
    #[error("unknown image id `{0}`")]
    UnknownId(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    /// Source extents `(height, width)`.
    pub height: usize,
    pub width: usize,
}

/// Entries sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub split: String,
    pub entries: Vec<ManifestEntry>,
}

fn unreadable(path: &Path, reason: impl ToString) -> DatasetError {
    DatasetError::Unreadable { path: path.to_path_buf(), reason: reason.to_string() }
}

fn dimensions(path: &Path) -> Result<(usize, usize), DatasetError> {
    let (w, h) = image::image_dimensions(path).map_err(|e| unreadable(path, e))?;
    Ok((h as usize, w as usize))
}

fn list(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| unreadable(dir, e))? {
        let path = entry.map_err(|e| unreadable(dir, e))?.path();
        if path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Scans `dir` for images and masks side by side.
pub fn ingest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    ingest_split(dir, Some(dir), "all")
}

/// Scans `image_dir` for images and, when given, `mask_dir` for their
/// masks. Every image is probed for its extents; masks must match them.
pub fn ingest_split(image_dir: &Path, mask_dir: Option<&Path>, split: &str) -> Result<DatasetManifest, DatasetError> {
    let mut images: BTreeMap<String, PathBuf> = BTreeMap::new();
    for path in list(image_dir)? {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(MASK_SUFFIX) {
            continue;
        }
        let (Some(stem), Some(ext)) = (path.file_stem().and_then(|s| s.to_str()), path.extension().and_then(|e| e.to_str()))
        else {
            continue;
        };
        if !IMAGE_EXTENSIONS.contains(&ext.to_ascii_lowercase().as_str()) {
            continue;
        }
        if let Some(first) = images.get(stem) {
            return Err(DatasetError::DuplicateId { id: stem.to_string(), first: first.clone(), second: path });
        }
        images.insert(stem.to_string(), path);
    }
    if images.is_empty() {
        return Err(DatasetError::Empty(image_dir.to_path_buf()));
    }
    let entries = images
        .into_par_iter()
        .map(|(id, image_path)| {
            let (height, width) = dimensions(&image_path)?;
            let mask_path = mask_dir.map(|d| d.join(format!("{id}{MASK_SUFFIX}"))).filter(|p| p.is_file());
            if let Some(mp) = &mask_path {
                let found = dimensions(mp)?;
                if found != (height, width) {
                    return Err(DatasetError::MaskExtents { path: mp.clone(), expected: (height, width), found });
                }
            }
            Ok(ManifestEntry { id, image_path, mask_path, height, width })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok(DatasetManifest { split: split.to_string(), entries })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn require_masks(&self) -> Result<(), DatasetError> {
        match self.entries.iter().find(|e| e.mask_path.is_none()) {
            Some(e) => Err(DatasetError::MissingMask(e.id.clone())),
            None => Ok(()),
        }
    }

    /// Subset with the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> DatasetManifest {
        DatasetManifest { split: self.split.clone(), entries: indices.iter().map(|&i| self.entries[i].clone()).collect() }
    }
}

/// Decodes `entry` into a network input of `h x w`.
pub fn load_input<T: Scalar>(entry: &ManifestEntry, h: usize, w: usize) -> Result<crate::tensor::Tensor<T>, DatasetError> {
    let img = RgbImage::<T>::load(&entry.image_path)?;
    Ok(compose_channels(&img, h, w))
}

/// Decodes images and masks, resized to `h x w`.
pub fn load_samples<T: Scalar>(manifest: &DatasetManifest, h: usize, w: usize) -> Result<Vec<Sample<T>>, DatasetError> {
    manifest.require_masks()?;
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let input = load_input(e, h, w)?;
            let mask_path = e.mask_path.as_ref().expect("checked above");
            let mask = resize_mask(&BinaryMask::load_png(mask_path)?, h, w);
            Ok(Sample { id: e.id.clone(), input, mask: mask.to_tensor() })
        })
        .collect()
}
