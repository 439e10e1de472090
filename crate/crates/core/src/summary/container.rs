//! The SBE1 tensor container.
//!
//! Layout: the magic `SBE1`, a little-endian `u32` manifest length, the UTF-8
//! JSON manifest, zero padding up to the next multiple of 8 bytes, then the
//! tensor payloads. Tensor `offset`s are relative to the start of the payload
//! region, 8-byte aligned, and payloads are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"SBE1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::F64(_) => "f64",
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len() * 4,
            TensorData::F64(v) => v.len() * 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        Self { name: name.into(), shape, data: TensorData::F32(data) }
    }

    pub fn f64(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { name: name.into(), shape, data: TensorData::F64(data) }
    }

    /// Stores a matrix as `f32`, the interchange dtype.
    pub fn matrix_f32(name: impl Into<String>, m: &Matrix) -> Self {
        Self::f32(name, vec![m.rows(), m.cols()], m.as_slice().iter().map(|v| *v as f32).collect())
    }

    /// Stores a matrix losslessly.
    pub fn matrix_f64(name: impl Into<String>, m: &Matrix) -> Self {
        Self::f64(name, vec![m.rows(), m.cols()], m.as_slice().to_vec())
    }

    pub fn values_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|x| f64::from(*x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    /// 2-D tensors map to matrices directly; 1-D tensors become a single row.
    pub fn to_matrix(&self) -> Result<Matrix> {
        let (r, c) = match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            other => return Err(Error::Manifest(format!("tensor `{}` has rank {}", self.name, other.len()))),
        };
        Matrix::from_vec(r, c, self.values_f64())
    }
}

/// Run metadata carried in every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerMeta {
    pub task: String,
    /// Embedding layer index; `-1` for containers that are not embeddings.
    pub layer: i64,
    pub seed: u64,
    pub context_fingerprint: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ContainerMeta {
    pub fn new(task: impl Into<String>, seed: u64) -> Self {
        Self { task: task.into(), layer: -1, seed, context_fingerprint: String::new(), extra: Map::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.extra.insert(key.to_owned(), value.into());
        self
    }

    pub fn extra_str(&self, key: &str) -> Option<&str> {
        self.extra.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    tensors: Vec<TensorEntry>,
    meta: ContainerMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub meta: ContainerMeta,
    pub tensors: Vec<Tensor>,
}

fn align8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

impl Container {
    pub fn new(meta: ContainerMeta) -> Self {
        Self { meta, tensors: Vec::new() }
    }

    pub fn push(&mut self, tensor: Tensor) -> &mut Self {
        self.tensors.push(tensor);
        self
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Manifest(format!("missing tensor `{name}`")))
    }

    pub fn matrix(&self, name: &str) -> Result<Matrix> {
        self.get(name)?.to_matrix()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for t in &self.tensors {
            let expected: usize = t.shape.iter().product();
            if expected != t.data.len() {
                return Err(Error::DimensionMismatch { expected, got: t.data.len() });
            }
            offset = align8(offset);
            entries.push(TensorEntry {
                name: t.name.clone(),
                dtype: t.data.dtype().to_owned(),
                shape: t.shape.clone(),
                offset,
                length: t.data.byte_len(),
            });
            offset += t.data.byte_len();
        }
        let manifest = Manifest { version: FORMAT_VERSION, tensors: entries, meta: self.meta.clone() };
        let header = serde_json::to_vec(&manifest)?;
        let header_len = u32::try_from(header.len()).map_err(|_| Error::Manifest("manifest too large".into()))?;
        let payload_start = align8(8 + header.len());
        let mut out = Vec::with_capacity(payload_start + offset);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for (t, e) in self.tensors.iter().zip(&manifest.tensors) {
            out.resize(payload_start + e.offset, 0);
            match &t.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out.resize(align8(8 + header.len()).max(out.len()), 0);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::TruncatedPayload { needed: 8, available: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4-byte slice");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice")) as usize;
        let header_end = 8 + header_len;
        if bytes.len() < header_end {
            return Err(Error::TruncatedPayload { needed: header_end, available: bytes.len() });
        }
        let manifest: Manifest = serde_json::from_slice(&bytes[8..header_end])
            .map_err(|e| Error::Manifest(format!("unparseable manifest: {e}")))?;
        if manifest.version != FORMAT_VERSION {
            return Err(Error::Manifest(format!("unsupported version {}", manifest.version)));
        }
        let payload_start = align8(header_end);

        let mut extents: Vec<(usize, usize, &str)> = Vec::with_capacity(manifest.tensors.len());
        for e in &manifest.tensors {
            let width = match e.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => return Err(Error::Manifest(format!("tensor `{}` has unsupported dtype `{other}`", e.name))),
            };
            let count: usize = e.shape.iter().product();
            if count * width != e.length {
                return Err(Error::OffsetMismatch(format!(
                    "tensor `{}` declares {} bytes but its shape needs {}",
                    e.name,
                    e.length,
                    count * width
                )));
            }
            if e.offset % 8 != 0 {
                return Err(Error::OffsetMismatch(format!("tensor `{}` offset {} is not 8-byte aligned", e.name, e.offset)));
            }
            extents.push((e.offset, e.offset + e.length, &e.name));
        }
        let mut sorted = extents.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::OffsetMismatch(format!("tensors `{}` and `{}` overlap", w[0].2, w[1].2)));
            }
        }
        if let Some(end) = extents.iter().map(|e| e.1).max() {
            if payload_start + end > bytes.len() {
                return Err(Error::TruncatedPayload { needed: payload_start + end, available: bytes.len() });
            }
        }

        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let raw = &bytes[payload_start + e.offset..payload_start + e.offset + e.length];
            let data = if e.dtype == "f32" {
                TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
            } else {
                TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
            };
            tensors.push(Tensor { name: e.name, shape: e.shape, data });
        }
        Ok(Self { meta: manifest.meta, tensors })
    }

    /// Write atomically: a sibling temp file is renamed into place.
    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        write_atomic(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
