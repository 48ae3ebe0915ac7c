//! Versioned little-endian weight files.
//!
//! Layout: magic (8 bytes), version (u32), architecture fingerprint (u64),
//! tensor count (u32), then per tensor: name length (u32), UTF-8 name,
//! dtype tag (u8: 0 = f32, 1 = f64), rank (u32), extents (u64 each), raw
//! little-endian values.

use std::collections::BTreeMap;
use std::path::Path;

use super::arch::ArchitectureSpec;
use super::state::{skeleton, ModelState};
use super::ModelError;
use crate::tensor::{Scalar, Tensor};
use crate::train::{AdamConfig, AdamState};

pub const MAGIC: [u8; 8] = *b"LSEGWTS\0";
pub const FORMAT_VERSION: u32 = 1;

const ADAM_CONFIG: &str = "adam.config";
const F32_TAG: u8 = 0;
const F64_TAG: u8 = 1;

/// Name, dtype and extents of one stored tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordInfo {
    pub name: String,
    pub dtype: u8,
    pub shape: Vec<usize>,
}

impl RecordInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether the record holds a trainable parameter (as opposed to running
    /// statistics or optimizer state).
    pub fn is_trainable(&self) -> bool {
        !self.name.starts_with("adam.")
            && [".weight", ".bias", ".gamma", ".beta"].iter().any(|s| self.name.ends_with(s))
    }
}

struct Record {
    info: RecordInfo,
    bytes: Vec<u8>,
}

/// A parsed weight file.
pub struct WeightFile {
    pub version: u32,
    pub fingerprint: u64,
    records: Vec<Record>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).ok_or(ModelError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(ModelError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl WeightFile {
    pub fn parse(buf: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len()).map_err(|_| ModelError::BadMagic)? != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModelError::UnknownVersion(version));
        }
        let fingerprint = r.u64()?;
        let count = r.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| ModelError::Truncated)?;
            let dtype = r.u8()?;
            let width = match dtype {
                F32_TAG => 4,
                F64_TAG => 8,
                other => return Err(ModelError::DtypeMismatch { name, expected: F32_TAG, found: other }),
            };
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let bytes = r.take(n.checked_mul(width).ok_or(ModelError::Truncated)?)?.to_vec();
            records.push(Record { info: RecordInfo { name, dtype, shape }, bytes });
        }
        if r.pos != buf.len() {
            return Err(ModelError::UnexpectedTensor("<trailing bytes>".into()));
        }
        Ok(Self { version, fingerprint, records })
    }

    pub fn read(path: &Path) -> Result<Self, ModelError> {
        Self::parse(&std::fs::read(path)?)
    }

    pub fn records(&self) -> impl Iterator<Item = &RecordInfo> {
        self.records.iter().map(|r| &r.info)
    }
}

fn write_record<T: Scalar>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE_TAG);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    out.reserve(t.len() * T::BYTES);
    for &v in t.data() {
        v.write_le(out);
    }
}

fn named_tensors<T: Scalar>(state: &ModelState<T>) -> Vec<(String, &Tensor<T>)> {
    let mut out = Vec::new();
    for l in state.layers() {
        out.push((format!("{}.weight", l.name), &l.conv.weight));
        out.push((format!("{}.bias", l.name), &l.conv.bias));
        if let Some(bn) = &l.bn {
            out.push((format!("{}.bn.gamma", l.name), &bn.gamma));
            out.push((format!("{}.bn.beta", l.name), &bn.beta));
            out.push((format!("{}.bn.running_mean", l.name), &bn.running_mean));
            out.push((format!("{}.bn.running_var", l.name), &bn.running_var));
        }
    }
    let adam = &state.optimizer;
    for ((name, m), v) in adam.names().iter().zip(adam.first_moments()).zip(adam.second_moments()) {
        out.push((format!("adam.m.{name}"), m));
        out.push((format!("adam.v.{name}"), v));
    }
    out
}

/// Serializes the full state, including optimizer moments.
pub fn to_bytes<T: Scalar>(state: &ModelState<T>) -> Vec<u8> {
    let tensors = named_tensors(state);
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&state.fingerprint().to_le_bytes());
    out.extend_from_slice(&((tensors.len() + 1) as u32).to_le_bytes());
    let c = state.optimizer.config;
    let cfg = Tensor::from_vec(
        &[5],
        vec![c.lr, c.beta1, c.beta2, c.epsilon, state.optimizer.step_count() as f64],
    )
    .expect("five values");
    write_record(&mut out, ADAM_CONFIG, &cfg);
    for (name, t) in tensors {
        write_record(&mut out, &name, t);
    }
    out
}

pub fn save_model<T: Scalar>(state: &ModelState<T>, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, to_bytes(state))?;
    Ok(())
}

fn decode<T: Scalar>(rec: &Record) -> Result<Tensor<T>, ModelError> {
    if rec.info.dtype != T::DTYPE_TAG {
        return Err(ModelError::DtypeMismatch { name: rec.info.name.clone(), expected: T::DTYPE_TAG, found: rec.info.dtype });
    }
    let data = rec.bytes.chunks_exact(T::BYTES).map(T::read_le).collect();
    Ok(Tensor::from_vec(&rec.info.shape, data)?)
}

impl WeightFile {
    /// Rebuilds a state for `spec`; the stored fingerprint must match.
    pub fn into_state<T: Scalar>(self, spec: &ArchitectureSpec) -> Result<ModelState<T>, ModelError> {
        let expected = spec.fingerprint();
        if self.fingerprint != expected {
            return Err(ModelError::FingerprintMismatch { expected, found: self.fingerprint });
        }
        let mut by_name: BTreeMap<String, Record> =
            self.records.into_iter().map(|r| (r.info.name.clone(), r)).collect();

        let cfg_rec = by_name.remove(ADAM_CONFIG).ok_or_else(|| ModelError::MissingTensor(ADAM_CONFIG.into()))?;
        let cfg: Tensor<f64> = decode(&cfg_rec)?;
        let [lr, beta1, beta2, epsilon, step]: [f64; 5] = cfg
            .data()
            .try_into()
            .map_err(|_| ModelError::TensorShape { name: ADAM_CONFIG.into(), expected: vec![5], found: cfg.shape().to_vec() })?;
        let adam_config = AdamConfig { lr, beta1, beta2, epsilon };

        let mut state: ModelState<T> = skeleton(spec, adam_config)?;
        let mut take = |name: String, like: &Tensor<T>| -> Result<Tensor<T>, ModelError> {
            let rec = by_name.remove(&name).ok_or_else(|| ModelError::MissingTensor(name.clone()))?;
            if rec.info.shape != like.shape() {
                return Err(ModelError::TensorShape { name, expected: like.shape().to_vec(), found: rec.info.shape });
            }
            decode(&rec)
        };

        for l in state.layers_for_forward() {
            l.conv.weight = take(format!("{}.weight", l.name), &l.conv.weight)?;
            l.conv.bias = take(format!("{}.bias", l.name), &l.conv.bias)?;
            if let Some(bn) = &mut l.bn {
                bn.gamma = take(format!("{}.bn.gamma", l.name), &bn.gamma)?;
                bn.beta = take(format!("{}.bn.beta", l.name), &bn.beta)?;
                bn.running_mean = take(format!("{}.bn.running_mean", l.name), &bn.running_mean)?;
                bn.running_var = take(format!("{}.bn.running_var", l.name), &bn.running_var)?;
            }
        }
        let names = state.optimizer.names().to_vec();
        let mut first = Vec::with_capacity(names.len());
        let mut second = Vec::with_capacity(names.len());
        for (name, like) in names.iter().zip(state.optimizer.first_moments()) {
            first.push(take(format!("adam.m.{name}"), like)?);
            second.push(take(format!("adam.v.{name}"), like)?);
        }
        if let Some(extra) = by_name.into_keys().next() {
            return Err(ModelError::UnexpectedTensor(extra));
        }
        state.optimizer = AdamState::from_parts(adam_config, step as u64, names, first, second);
        Ok(state)
    }
}

/// Reads a weight file written by [`save_model`] for architecture `spec`.
pub fn load_model<T: Scalar>(path: &Path, spec: &ArchitectureSpec) -> Result<ModelState<T>, ModelError> {
    WeightFile::read(path)?.into_state(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_cdnn29_scaled, count_parameters, init_model};
    use crate::rng::Rng;

    fn sample_state() -> ModelState<f32> {
        init_model(&build_cdnn29_scaled(16), &mut Rng::new(5)).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let state = sample_state();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        save_model(&state, &a).unwrap();
        let loaded: ModelState<f32> = load_model(&a, state.spec()).unwrap();
        assert_eq!(loaded.layers(), state.layers());
        save_model(&loaded, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn distinct_errors() {
        let state = sample_state();
        let bytes = to_bytes(&state);

        let wrong = build_cdnn29_scaled(8);
        assert!(matches!(
            WeightFile::parse(&bytes).unwrap().into_state::<f32>(&wrong),
            Err(ModelError::FingerprintMismatch { .. })
        ));
        assert!(matches!(WeightFile::parse(&bytes[..bytes.len() - 3]), Err(ModelError::Truncated)));
        let mut v2 = bytes.clone();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(WeightFile::parse(&v2), Err(ModelError::UnknownVersion(2))));
        assert!(matches!(WeightFile::parse(b"not a weight file"), Err(ModelError::BadMagic)));
        assert!(matches!(
            WeightFile::parse(&bytes).unwrap().into_state::<f64>(state.spec()),
            Err(ModelError::DtypeMismatch { .. })
        ));
    }

    #[test]
    fn serialized_trainables_match_parameter_count() {
        let state = sample_state();
        let file = WeightFile::parse(&to_bytes(&state)).unwrap();
        let stored: usize = file.records().filter(|r| r.is_trainable()).map(|r| r.len()).sum();
        assert_eq!(stored, count_parameters(state.spec()));
    }
}
