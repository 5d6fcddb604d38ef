//! Checkpoint files.
//!
//! Layout: `BDLM`, one version byte, the header length as a little-endian
//! `u64`, a UTF-8 JSON header, then the payload. The header maps each
//! tensor name to `{dtype, shape, data_offsets: [begin, end)}` (offsets are
//! relative to the payload start) and holds string metadata under
//! `__metadata__`. Tensors are laid out contiguously in name order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{ModelConfig, Transformer};
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"BDLM";
pub const VERSION: u8 = 1;
pub const METADATA_KEY: &str = "__metadata__";
/// Metadata key holding the model config as JSON.
pub const CONFIG_KEY: &str = "config";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("file truncated: {what} needs {need} bytes, {have} available")]
    Truncated { what: String, need: u64, have: u64 },
    #[error("bad magic bytes {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("tensor name {0:?} must be `backbone.*` or `head.<modality>.*`")]
    Name(String),
    #[error("tensor {0:?} appears twice in the header")]
    Duplicate(String),
    #[error("tensor {name:?}: unknown dtype {dtype:?}")]
    DType { name: String, dtype: String },
    #[error("tensor {name:?}: shape {shape:?} needs {expected} bytes, offsets span {got}")]
    Shape {
        name: String,
        shape: Vec<usize>,
        expected: u64,
        got: u64,
    },
    #[error("tensor {name:?}: offsets [{begin}, {end}) invalid for a payload of {payload} bytes")]
    Offsets {
        name: String,
        begin: u64,
        end: u64,
        payload: u64,
    },
    #[error("tensor {name:?} overlaps tensor {other:?}")]
    Overlap { name: String, other: String },
    #[error("tensor {name:?} does not start where the previous tensor ends (gap of {gap} bytes)")]
    Gap { name: String, gap: u64 },
    #[error("{extra} payload bytes after the last tensor {after:?}")]
    Trailing { after: String, extra: u64 },
    #[error("malformed metadata: {0}")]
    Metadata(String),
}

impl FormatError {
    /// Stable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Truncated { .. } => "truncated",
            Self::Magic(_) => "magic",
            Self::Version(_) => "version",
            Self::Header(_) => "header",
            Self::Name(_) => "name",
            Self::Duplicate(_) => "duplicate",
            Self::DType { .. } => "dtype",
            Self::Shape { .. } => "shape",
            Self::Offsets { .. } => "offsets",
            Self::Overlap { .. } => "overlap",
            Self::Gap { .. } => "gap",
            Self::Trailing { .. } => "trailing",
            Self::Metadata(_) => "metadata",
        }
    }
}

/// Checks `backbone.<rest>` or `head.<modality>.<rest>`.
pub fn valid_name(name: &str) -> bool {
    let part_ok = |p: &str| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    let mut parts = name.split('.');
    match parts.next() {
        Some("backbone") => {
            let rest: Vec<&str> = parts.collect();
            !rest.is_empty() && rest.iter().all(|p| part_ok(p))
        }
        Some("head") => {
            let rest: Vec<&str> = parts.collect();
            rest.len() >= 2 && rest.iter().all(|p| part_ok(p))
        }
        _ => false,
    }
}

/// `head.<modality>.x` → `Some(modality)`.
pub fn head_modality(name: &str) -> Option<&str> {
    let rest = name.strip_prefix("head.")?;
    rest.split('.').next()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl StoredTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self, FormatError> {
        let t = Self { shape, data };
        if t.shape.iter().product::<usize>() != t.numel() {
            return Err(FormatError::Shape {
                name: String::new(),
                shape: t.shape.clone(),
                expected: (t.shape.iter().product::<usize>() * t.dtype().size_of()) as u64,
                got: (t.numel() * t.dtype().size_of()) as u64,
            });
        }
        Ok(t)
    }

    pub fn from_tensor<F: Scalar>(t: &Tensor<F>) -> Self {
        let data = match F::DTYPE {
            DType::F32 => TensorData::F32(t.data().iter().map(|x| x.as_f64() as f32).collect()),
            DType::F64 => TensorData::F64(t.data().iter().map(|x| x.as_f64()).collect()),
        };
        Self {
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub fn from_f64(shape: Vec<usize>, values: &[f64], dtype: DType) -> Result<Self, FormatError> {
        let data = match dtype {
            DType::F32 => TensorData::F32(values.iter().map(|&x| x as f32).collect()),
            DType::F64 => TensorData::F64(values.to_vec()),
        };
        Self::new(shape, data)
    }

    /// Converts to `Tensor<F>`, casting if the stored dtype differs.
    pub fn to_tensor<F: Scalar>(&self) -> Tensor<F> {
        let data: Vec<F> = match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| F::of(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| F::of(x)).collect(),
        };
        Tensor::new(self.shape.clone(), data).expect("stored tensors are consistent")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn numel(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    /// Values widened to `f64`.
    pub fn values_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    /// Equality of the raw bits, so NaN payloads and signed zeros count.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && match (&self.data, &other.data) {
                (TensorData::F32(a), TensorData::F32(b)) => {
                    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                }
                (TensorData::F64(a), TensorData::F64(b)) => {
                    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
                }
                _ => false,
            }
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }

    fn read_le(shape: Vec<usize>, dtype: DType, bytes: &[u8]) -> Self {
        let data = match dtype {
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Self { shape, data }
    }
}

/// Named tensors plus string metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, StoredTensor>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: String,
    shape: Vec<usize>,
    data_offsets: [u64; 2],
}

/// JSON object entries in file order, duplicates kept.
struct Entries(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V)
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: StoredTensor) -> Result<(), FormatError> {
        let name = name.into();
        if !valid_name(&name) {
            return Err(FormatError::Name(name));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<StoredTensor> {
        self.tensors.remove(name)
    }

    pub fn tensors(&self) -> &BTreeMap<String, StoredTensor> {
        &self.tensors
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Bitwise equality of tensors and equality of metadata.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.metadata == other.metadata
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((na, a), (nb, b))| na == nb && a.bit_eq(b))
    }

    pub fn from_model<F: Scalar>(model: &Transformer<F>) -> Self {
        let mut ck = Self::new();
        for (name, t) in model.params() {
            ck.insert(name.clone(), StoredTensor::from_tensor(t))
                .expect("model parameter names are valid");
        }
        ck.metadata.insert(
            CONFIG_KEY.to_string(),
            serde_json::to_string(model.config()).expect("config serializes"),
        );
        ck
    }

    pub fn config(&self) -> Result<ModelConfig, FormatError> {
        let raw = self
            .metadata
            .get(CONFIG_KEY)
            .ok_or_else(|| FormatError::Metadata(format!("missing `{CONFIG_KEY}`")))?;
        serde_json::from_str(raw).map_err(|e| FormatError::Metadata(format!("`{CONFIG_KEY}`: {e}")))
    }

    /// Rebuilds a model from the `backbone.*` tensors and the stored
    /// config. Head tensors are ignored.
    pub fn to_model<F: Scalar>(&self) -> Result<Transformer<F>, crate::model::ModelError> {
        let config = self
            .config()
            .map_err(|e| crate::model::ModelError::Config(e.to_string()))?;
        let named = self
            .tensors
            .iter()
            .filter(|(k, _)| k.starts_with("backbone."))
            .map(|(k, t)| (k.clone(), t.to_tensor::<F>()))
            .collect();
        Transformer::from_params(config, named)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = Map::new();
        header.insert(METADATA_KEY.to_string(), json!(self.metadata));
        let mut payload = Vec::new();
        for (name, t) in &self.tensors {
            let begin = payload.len() as u64;
            t.write_le(&mut payload);
            let entry = HeaderEntry {
                dtype: t.dtype().as_str().to_string(),
                shape: t.shape.clone(),
                data_offsets: [begin, payload.len() as u64],
            };
            header.insert(name.clone(), serde_json::to_value(entry).expect("entry serializes"));
        }
        let header = serde_json::to_vec(&Value::Object(header)).expect("header serializes");
        let mut out = Vec::with_capacity(13 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let have = bytes.len() as u64;
        let truncated = |what: &str, need: u64| FormatError::Truncated {
            what: what.to_string(),
            need,
            have,
        };
        if bytes.len() < 4 {
            return Err(truncated("magic", 4));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(FormatError::Magic(magic));
        }
        if bytes.len() < 5 {
            return Err(truncated("version", 5));
        }
        if bytes[4] != VERSION {
            return Err(FormatError::Version(bytes[4]));
        }
        if bytes.len() < 13 {
            return Err(truncated("header length", 13));
        }
        let header_len = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
        let header_end = 13u64
            .checked_add(header_len)
            .filter(|&e| e <= have)
            .ok_or_else(|| truncated("header", 13u64.saturating_add(header_len)))?
            as usize;
        let header = std::str::from_utf8(&bytes[13..header_end])
            .map_err(|e| FormatError::Header(format!("not UTF-8: {e}")))?;
        let entries: Entries = serde_json::from_str(header).map_err(|e| FormatError::Header(e.to_string()))?;
        let payload = &bytes[header_end..];
        let payload_len = payload.len() as u64;

        let mut ck = Checkpoint::new();
        let mut seen_meta = false;
        let mut layout: Vec<(u64, u64, String, Vec<usize>, DType)> = Vec::new();
        let mut names = std::collections::BTreeSet::new();
        for (name, value) in entries.0 {
            if name == METADATA_KEY {
                if seen_meta {
                    return Err(FormatError::Duplicate(name));
                }
                seen_meta = true;
                ck.metadata = serde_json::from_value(value).map_err(|e| FormatError::Metadata(e.to_string()))?;
                continue;
            }
            if !names.insert(name.clone()) {
                return Err(FormatError::Duplicate(name));
            }
            if !valid_name(&name) {
                return Err(FormatError::Name(name));
            }
            let entry: HeaderEntry = serde_json::from_value(value)
                .map_err(|e| FormatError::Header(format!("tensor {name:?}: {e}")))?;
            let dtype = DType::parse(&entry.dtype).ok_or_else(|| FormatError::DType {
                name: name.clone(),
                dtype: entry.dtype.clone(),
            })?;
            let [begin, end] = entry.data_offsets;
            if begin > end || end > payload_len {
                return Err(FormatError::Offsets {
                    name,
                    begin,
                    end,
                    payload: payload_len,
                });
            }
            let expected = entry
                .shape
                .iter()
                .try_fold(dtype.size_of() as u64, |acc, &d| acc.checked_mul(d as u64));
            if expected != Some(end - begin) {
                return Err(FormatError::Shape {
                    name,
                    shape: entry.shape,
                    expected: expected.unwrap_or(u64::MAX),
                    got: end - begin,
                });
            }
            layout.push((begin, end, name, entry.shape, dtype));
        }
        layout.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
        let mut cursor = 0u64;
        let mut prev = String::from("<header>");
        for (begin, end, name, shape, dtype) in layout {
            if begin < cursor {
                return Err(FormatError::Overlap { name, other: prev });
            }
            if begin > cursor {
                return Err(FormatError::Gap {
                    name,
                    gap: begin - cursor,
                });
            }
            let t = StoredTensor::read_le(shape, dtype, &payload[begin as usize..end as usize]);
            ck.tensors.insert(name.clone(), t);
            cursor = end;
            prev = name;
        }
        if cursor != payload_len {
            return Err(FormatError::Trailing {
                after: prev,
                extra: payload_len - cursor,
            });
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| FormatError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let bytes = std::fs::read(path).map_err(|source| FormatError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert("backbone.a", StoredTensor::new(vec![2, 2], TensorData::F32(vec![1.0, -0.0, f32::NAN, 3.5])).unwrap())
            .unwrap();
        ck.insert("head.vl.proj", StoredTensor::new(vec![3], TensorData::F64(vec![1e-300, 2.0, -7.25])).unwrap())
            .unwrap();
        ck.metadata.insert("note".into(), "x".into());
        ck
    }

    #[test]
    fn names() {
        for ok in ["backbone.embed", "backbone.layer0.attn.q", "head.vl.proj", "head.asr.layer1.w"] {
            assert!(valid_name(ok), "{ok}");
        }
        for bad in ["embed", "backbone", "backbone.", "head.vl", "head..x", "head.v l.x", "backbone.a..b"] {
            assert!(!valid_name(bad), "{bad}");
        }
        assert_eq!(head_modality("head.asr.w"), Some("asr"));
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert!(back.bit_eq(&ck));
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn empty_checkpoint() {
        let ck = Checkpoint::new();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn short_payload_names_tensor() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 4);
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert_eq!(err.kind(), "offsets");
        assert!(err.to_string().contains("head.vl.proj"), "{err}");
    }

    #[test]
    fn model_round_trip() {
        let m = Transformer::<f32>::new(ModelConfig::tiny(), 5).unwrap();
        let ck = Checkpoint::from_model(&m);
        let back: Transformer<f32> = Checkpoint::from_bytes(&ck.to_bytes()).unwrap().to_model().unwrap();
        assert_eq!(back, m);
    }
}
