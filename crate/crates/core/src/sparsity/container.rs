//! Binary container for named tensors, used for checkpoints and sparse exports.
//!
//! Layout: `b"SVDX"`, format version (u32 LE), header length (u64 LE), a JSON
//! header describing every tensor, then the raw little-endian payload. Dense
//! tensors are stored as f64 values; CSR matrices as u32 row offsets, u32
//! column indices and f64 values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ndmath::Tensor;

use super::csr::CsrMatrix;

pub const MAGIC: &[u8; 4] = b"SVDX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum StoredTensor {
    Dense(Tensor),
    Csr(CsrMatrix),
}

impl StoredTensor {
    pub fn to_dense(&self) -> Tensor {
        match self {
            StoredTensor::Dense(t) => t.clone(),
            StoredTensor::Csr(c) => c.to_dense(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    /// Free-form label, e.g. `checkpoint` or `sparse-export`.
    pub kind: String,
    /// Pruning threshold used to produce CSR entries, if any.
    pub threshold: Option<f64>,
    /// Arbitrary JSON metadata (config echo, epoch, vocabulary, ...).
    pub meta: Value,
    pub tensors: Vec<(String, StoredTensor)>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Storage {
    Dense,
    Csr,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Entry {
    name: String,
    storage: Storage,
    shape: Vec<usize>,
    offset: u64,
    bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    nnz: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    format_version: u32,
    kind: String,
    threshold: Option<f64>,
    meta: Value,
    tensors: Vec<Entry>,
}

impl Container {
    pub fn new(kind: &str, meta: Value) -> Self {
        Self {
            kind: kind.to_string(),
            threshold: None,
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: StoredTensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Every tensor in dense form, keyed by name.
    pub fn dense_map(&self) -> BTreeMap<String, Tensor> {
        self.tensors.iter().map(|(n, t)| (n.clone(), t.to_dense())).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let offset = payload.len() as u64;
            let (storage, shape, nnz) = match t {
                StoredTensor::Dense(d) => {
                    put_f64s(&mut payload, d.data());
                    (Storage::Dense, d.shape().to_vec(), None)
                }
                StoredTensor::Csr(c) => {
                    put_u32s(&mut payload, c.row_offsets())?;
                    put_u32s(&mut payload, c.col_indices())?;
                    put_f64s(&mut payload, c.values());
                    (Storage::Csr, vec![c.rows(), c.cols()], Some(c.nnz()))
                }
            };
            entries.push(Entry {
                name: name.clone(),
                storage,
                shape,
                offset,
                bytes: payload.len() as u64 - offset,
                nnz,
            });
        }
        let header = serde_json::to_vec(&Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            threshold: self.threshold,
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Format(msg);
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not a model container (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[16..payload_start])?;
        let payload = &bytes[payload_start..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let start = e.offset as usize;
            let end = start
                .checked_add(e.bytes as usize)
                .filter(|&end| end <= payload.len())
                .ok_or_else(|| bad(format!("tensor '{}' runs past end of file", e.name)))?;
            let mut r = Reader { buf: &payload[start..end] };
            let t = match e.storage {
                Storage::Dense => {
                    let n: usize = e.shape.iter().product();
                    StoredTensor::Dense(Tensor::new(e.shape.clone(), r.f64s(n)?)?)
                }
                Storage::Csr => {
                    let [rows, cols] = e.shape[..] else {
                        return Err(bad(format!("csr tensor '{}' is not 2-D", e.name)));
                    };
                    let nnz = e.nnz.ok_or_else(|| bad(format!("csr tensor '{}' lacks nnz", e.name)))?;
                    let offsets = r.u32s(rows + 1)?;
                    let cols_idx = r.u32s(nnz)?;
                    let values = r.f64s(nnz)?;
                    StoredTensor::Csr(CsrMatrix::from_parts(rows, cols, offsets, cols_idx, values)?)
                }
            };
            if !r.buf.is_empty() {
                return Err(bad(format!("tensor '{}' has trailing bytes", e.name)));
            }
            tensors.push((e.name, t));
        }
        Ok(Self {
            kind: header.kind,
            threshold: header.threshold,
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_u32s(out: &mut Vec<u8>, vs: &[usize]) -> Result<()> {
    for &v in vs {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("index {v} exceeds u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("tensor payload too short".into()));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<usize>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect())
    }
}
