//! Binary container shared by datasets and checkpoints: an 8-byte magic, a
//! little-endian `u64` manifest length, a JSON manifest, then a blob of
//! little-endian tensors, each with its own CRC-32.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    U32,
    F32,
    F64,
}

impl DType {
    pub fn width(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    U32(Vec<u32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::U8(_) => DType::U8,
            TensorData::U32(_) => DType::U32,
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::U32(v) => v.len(),
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bytes(&self) -> Vec<u8> {
        match self {
            TensorData::U8(v) => v.clone(),
            TensorData::U32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            TensorData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn from_bytes(dtype: DType, b: &[u8]) -> TensorData {
        match dtype {
            DType::U8 => TensorData::U8(b.to_vec()),
            DType::U32 => TensorData::U32(b.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::F32 => TensorData::F32(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            DType::F64 => TensorData::F64(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Offset inside the blob.
    pub offset: u64,
    pub bytes: u64,
    pub crc32: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    header: Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Default)]
pub struct ArchiveWriter {
    entries: Vec<TensorEntry>,
    blob: Vec<u8>,
}

impl ArchiveWriter {
    pub fn new() -> Self {
        ArchiveWriter::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], data: TensorData) -> Result<()> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Dimension(format!("tensor `{name}` shape {shape:?} holds {} values", data.len())));
        }
        let bytes = data.bytes();
        self.entries.push(TensorEntry {
            name: name.to_string(),
            dtype: data.dtype(),
            shape: shape.to_vec(),
            offset: self.blob.len() as u64,
            bytes: bytes.len() as u64,
            crc32: crc32fast::hash(&bytes),
        });
        self.blob.extend(bytes);
        Ok(())
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn to_bytes(&self, magic: &[u8; 8], header: Value) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec_pretty(&Manifest { header, tensors: self.entries.clone() })?;
        let mut out = Vec::with_capacity(16 + manifest.len() + self.blob.len());
        out.extend_from_slice(magic);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend(manifest);
        out.extend_from_slice(&self.blob);
        Ok(out)
    }

    pub fn write(&self, path: &Path, magic: &[u8; 8], header: Value) -> Result<()> {
        let bytes = self.to_bytes(magic, header)?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct Archive {
    header: Value,
    entries: Vec<TensorEntry>,
    blob: Vec<u8>,
    blob_start: u64,
}

impl Archive {
    pub fn from_bytes(bytes: Vec<u8>, magic: &[u8; 8]) -> Result<Archive> {
        if bytes.len() < 16 {
            return Err(Error::Load { offset: bytes.len() as u64, detail: "file shorter than its preamble".into() });
        }
        if &bytes[..8] != magic {
            return Err(Error::Load { offset: 0, detail: "unrecognized file magic".into() });
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let end = 16usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::Load {
            offset: bytes.len() as u64,
            detail: format!("manifest of {len} bytes is truncated"),
        })?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..end])
            .map_err(|e| Error::Load { offset: 16, detail: format!("manifest: {e}") })?;
        let blob = bytes[end..].to_vec();
        let blob_start = end as u64;
        for e in &manifest.tensors {
            let stop = e.offset.checked_add(e.bytes);
            if stop.is_none_or(|s| s > blob.len() as u64) {
                return Err(Error::Load {
                    offset: blob_start + blob.len() as u64,
                    detail: format!("tensor `{}` runs past the end of the file", e.name),
                });
            }
            let count: usize = e.shape.iter().product();
            if count * e.dtype.width() != e.bytes as usize {
                return Err(Error::Load {
                    offset: blob_start + e.offset,
                    detail: format!("tensor `{}` size disagrees with its shape", e.name),
                });
            }
        }
        Ok(Archive { header: manifest.header, entries: manifest.tensors, blob, blob_start })
    }

    pub fn read(path: &Path, magic: &[u8; 8]) -> Result<Archive> {
        Archive::from_bytes(fs::read(path)?, magic)
    }

    pub fn header(&self) -> &Value {
        &self.header
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    /// Verifies every checksum.
    pub fn verify(&self) -> Result<()> {
        for e in &self.entries {
            self.raw(e)?;
        }
        Ok(())
    }

    fn raw(&self, e: &TensorEntry) -> Result<&[u8]> {
        let b = &self.blob[e.offset as usize..(e.offset + e.bytes) as usize];
        if crc32fast::hash(b) != e.crc32 {
            return Err(Error::Checksum { tensor: e.name.clone(), offset: self.blob_start + e.offset });
        }
        Ok(b)
    }

    pub fn get(&self, name: &str) -> Result<(Vec<usize>, TensorData)> {
        let e = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Load { offset: self.blob_start, detail: format!("missing tensor `{name}`") })?;
        Ok((e.shape.clone(), TensorData::from_bytes(e.dtype, self.raw(e)?)))
    }

    fn typed<T>(&self, name: &str, want: DType, pick: impl FnOnce(TensorData) -> Option<Vec<T>>) -> Result<(Vec<usize>, Vec<T>)> {
        let (shape, data) = self.get(name)?;
        let got = data.dtype();
        pick(data).map(|v| (shape, v)).ok_or_else(|| Error::Load {
            offset: self.blob_start,
            detail: format!("tensor `{name}` is {got:?}, expected {want:?}"),
        })
    }

    pub fn u8s(&self, name: &str) -> Result<(Vec<usize>, Vec<u8>)> {
        self.typed(name, DType::U8, |d| if let TensorData::U8(v) = d { Some(v) } else { None })
    }

    pub fn u32s(&self, name: &str) -> Result<(Vec<usize>, Vec<u32>)> {
        self.typed(name, DType::U32, |d| if let TensorData::U32(v) = d { Some(v) } else { None })
    }

    pub fn f32s(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        self.typed(name, DType::F32, |d| if let TensorData::F32(v) = d { Some(v) } else { None })
    }

    pub fn f64s(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        self.typed(name, DType::F64, |d| if let TensorData::F64(v) = d { Some(v) } else { None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGIC: &[u8; 8] = b"TESTARCH";

    fn sample() -> Vec<u8> {
        let mut w = ArchiveWriter::new();
        w.add("a", &[2, 2], TensorData::F64(vec![1.0, -2.5, f64::MIN_POSITIVE, 3.0])).unwrap();
        w.add("b", &[3], TensorData::U8(vec![1, 2, 3])).unwrap();
        w.add("c", &[1], TensorData::F32(vec![0.1])).unwrap();
        w.to_bytes(MAGIC, serde_json::json!({"version": 1})).unwrap()
    }

    #[test]
    fn round_trip() {
        let a = Archive::from_bytes(sample(), MAGIC).unwrap();
        a.verify().unwrap();
        assert_eq!(a.header()["version"], 1);
        assert_eq!(a.f64s("a").unwrap(), (vec![2, 2], vec![1.0, -2.5, f64::MIN_POSITIVE, 3.0]));
        assert_eq!(a.u8s("b").unwrap().1, vec![1, 2, 3]);
        assert_eq!(a.f32s("c").unwrap().1, vec![0.1f32]);
        assert!(a.u8s("a").is_err());
    }

    #[test]
    fn corruption_and_truncation() {
        let mut bytes = sample();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        let a = Archive::from_bytes(bytes, MAGIC).unwrap();
        assert!(matches!(a.verify(), Err(Error::Checksum { .. })));
        let mut short = sample();
        short.truncate(short.len() - 3);
        assert!(matches!(Archive::from_bytes(short, MAGIC), Err(Error::Load { .. })));
        assert!(matches!(Archive::from_bytes(sample(), b"OTHERMAG"), Err(Error::Load { offset: 0, .. })));
        let mut w = ArchiveWriter::new();
        assert!(w.add("x", &[2], TensorData::U8(vec![1])).is_err());
    }
}
