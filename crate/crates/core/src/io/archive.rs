//! Model archive container.
//!
//! Layout: the 8-byte magic `FESARCHV`, a little-endian `u32` format version,
//! a little-endian `u64` header length, a JSON header, then the raw array
//! data. Every array is described in the header by name, element type,
//! shape and byte range; elements are IEEE-754 little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;

pub const MAGIC: &[u8; 8] = b"FESARCHV";
pub const ARCHIVE_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveKind {
    Pod,
    Kriging,
    Denoiser,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(dataset_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            dataset_hash: dataset_hash.into(),
            seed,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

impl ArrayData {
    fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::F32(v) => v.len(),
        }
    }

    fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::F32(_) => Dtype::F32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    kind: ArchiveKind,
    config: String,
    provenance: Provenance,
    arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub kind: ArchiveKind,
    /// Structured configuration document (JSON text).
    pub config: String,
    pub provenance: Provenance,
    pub arrays: Vec<NamedArray>,
}

impl ModelArchive {
    pub fn new(kind: ArchiveKind, config: String, provenance: Provenance) -> Self {
        Self {
            kind,
            config,
            provenance,
            arrays: Vec::new(),
        }
    }

    pub fn push_f64(&mut self, name: &str, shape: &[usize], data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: ArrayData::F64(data),
        });
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray, IoError> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| IoError::Format(format!("archive has no array named {name:?}")))
    }

    /// f64 array with an exact expected element count.
    pub fn f64_array(&self, name: &str, expected_len: usize) -> Result<&[f64], IoError> {
        let a = self.array(name)?;
        match &a.data {
            ArrayData::F64(v) if v.len() == expected_len => Ok(v),
            ArrayData::F64(v) => Err(IoError::Format(format!(
                "array {name:?} has {} elements, expected {expected_len}",
                v.len()
            ))),
            ArrayData::F32(_) => Err(IoError::Format(format!("array {name:?} is f32, expected f64"))),
        }
    }

    pub fn expect_kind(&self, kind: ArchiveKind) -> Result<(), IoError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(IoError::Format(format!("expected a {kind:?} archive, found {:?}", self.kind)))
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut data = Vec::new();
        let mut entries = Vec::with_capacity(self.arrays.len());
        for a in &self.arrays {
            let offset = data.len() as u64;
            match &a.data {
                ArrayData::F64(v) => v.iter().for_each(|x| data.extend_from_slice(&x.to_le_bytes())),
                ArrayData::F32(v) => v.iter().for_each(|x| data.extend_from_slice(&x.to_le_bytes())),
            }
            entries.push(ArrayEntry {
                name: a.name.clone(),
                dtype: a.data.dtype(),
                shape: a.shape.clone(),
                offset,
                length: data.len() as u64 - offset,
            });
        }
        let header = serde_json::to_vec(&Header {
            kind: self.kind,
            config: self.config.clone(),
            provenance: self.provenance.clone(),
            arrays: entries,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(20 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        let bad = |m: &str| IoError::Format(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a model archive (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != ARCHIVE_VERSION {
            return Err(IoError::Format(format!("unsupported archive version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = 20usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated archive header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..body])
            .map_err(|e| IoError::Format(format!("archive header: {e}")))?;
        let data = &bytes[body..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        for e in header.arrays {
            let n: usize = e.shape.iter().product();
            let (start, len) = (e.offset as usize, e.length as usize);
            if len != n * e.dtype.size() || start.checked_add(len).is_none_or(|end| end > data.len()) {
                return Err(IoError::Format(format!("array {:?} has an inconsistent byte range", e.name)));
            }
            let raw = &data[start..start + len];
            let payload = match e.dtype {
                Dtype::F64 => ArrayData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                Dtype::F32 => ArrayData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
            };
            debug_assert_eq!(payload.len(), n);
            arrays.push(NamedArray {
                name: e.name,
                shape: e.shape,
                data: payload,
            });
        }
        Ok(Self {
            kind: header.kind,
            config: header.config,
            provenance: header.provenance,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
