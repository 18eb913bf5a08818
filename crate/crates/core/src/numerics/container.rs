//! `NBT1` named-tensor container.
//!
//! Layout: the magic `NBT1`, a little-endian `u64` header length, a UTF-8
//! JSON header, then the raw little-endian payloads. Entry offsets in the
//! header are relative to the first payload byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DType, Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NBT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EntryHeader {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    entries: Vec<EntryHeader>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    dtype: DType,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

/// Ordered collection of named tensors plus string metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorContainer {
    entries: BTreeMap<String, Entry>,
    meta: BTreeMap<String, String>,
}

impl TensorContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<T: Scalar>(&mut self, name: impl Into<String>, tensor: &Tensor<T>) {
        let mut bytes = Vec::with_capacity(tensor.len() * T::DTYPE.size_in_bytes());
        for &v in tensor.data() {
            v.write_le(&mut bytes);
        }
        self.entries.insert(name.into(), Entry { dtype: T::DTYPE, shape: tensor.shape().to_vec(), bytes });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn dtype(&self, name: &str) -> Option<DType> {
        self.entries.get(name).map(|e| e.dtype)
    }

    /// Reads `name`, converting from the stored element type when it differs from `T`.
    pub fn get<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let e = self.entries.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        match e.dtype {
            d if d == T::DTYPE => Tensor::new(&e.shape, decode::<T>(&e.bytes)),
            DType::F32 => Ok(Tensor::new(&e.shape, decode::<f32>(&e.bytes))?.cast()),
            DType::F64 => Ok(Tensor::new(&e.shape, decode::<f64>(&e.bytes))?.cast()),
        }
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, e) in &self.entries {
            entries.push(EntryHeader { name: name.clone(), dtype: e.dtype, shape: e.shape.clone(), offset });
            offset += e.bytes.len() as u64;
        }
        let header = serde_json::to_vec(&Header { version: FORMAT_VERSION, entries, meta: self.meta.clone() })?;
        let mut out = Vec::with_capacity(12 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for e in self.entries.values() {
            out.extend_from_slice(&e.bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Parse { offset: 0, reason: "missing NBT1 magic".into() });
        }
        let header_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let payload_start = 12usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Parse { offset: 4, reason: format!("header length {header_len} exceeds file") })?;
        let header: Header = serde_json::from_slice(&bytes[12..payload_start])
            .map_err(|e| Error::Parse { offset: 12, reason: format!("bad header: {e}") })?;
        if header.version > FORMAT_VERSION {
            return Err(Error::Parse {
                offset: 12,
                reason: format!("container version {} is newer than supported {FORMAT_VERSION}", header.version),
            });
        }
        let payload = &bytes[payload_start..];
        let mut entries = BTreeMap::new();
        for h in header.entries {
            let n: usize = h.shape.iter().product();
            let len = n * h.dtype.size_in_bytes();
            let start = h.offset as usize;
            let end = start.checked_add(len).filter(|&e| e <= payload.len()).ok_or_else(|| Error::Parse {
                offset: payload_start + start,
                reason: format!("payload of `{}` is truncated", h.name),
            })?;
            entries.insert(h.name, Entry { dtype: h.dtype, shape: h.shape, bytes: payload[start..end].to_vec() });
        }
        Ok(TensorContainer { entries, meta: header.meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn decode<T: Scalar>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(T::DTYPE.size_in_bytes()).map(T::read_le).collect()
}
