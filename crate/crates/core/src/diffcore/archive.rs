//! Flat tensor archive used for checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "IDRVARCH"
//! version      u32
//! meta_len     u32, then meta_len bytes of UTF-8 JSON metadata
//! entry_count  u32
//! entry*       name_len u16, name bytes,
//!              dtype u8 (1 = f64, 2 = f32), rank u8, rank × u64 extents,
//!              product(extents) little-endian values of the dtype
//! ```

use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"IDRVARCH";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F64,
    F32,
}

impl DType {
    fn tag(self) -> u8 {
        match self {
            DType::F64 => 1,
            DType::F32 => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(DType::F64),
            2 => Some(DType::F32),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: DType,
    /// Values are stored as `f64`; `F32` entries are narrowed on write.
    pub tensor: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub metadata: String,
    pub entries: Vec<Entry>,
}

impl Archive {
    pub fn push(&mut self, name: impl Into<String>, dtype: DType, tensor: Tensor) {
        self.entries.push(Entry { name: name.into(), dtype, tensor });
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(ARCHIVE_MAGIC);
        out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype.tag());
            out.push(e.tensor.rank() as u8);
            for &d in e.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match e.dtype {
                DType::F64 => e.tensor.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                DType::F32 => e.tensor.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != ARCHIVE_MAGIC {
            return Err(Error::BadMagic { path: path.to_path_buf() });
        }
        let version = r.u32()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::VersionMismatch { path: path.to_path_buf(), found: version, expected: ARCHIVE_VERSION });
        }
        let meta_len = r.u32()? as usize;
        let metadata = String::from_utf8(r.take(meta_len)?.to_vec()).map_err(|_| r.malformed("metadata is not UTF-8"))?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| r.malformed("entry name is not UTF-8"))?;
            let dtype = DType::from_tag(r.take(1)?[0]).ok_or_else(|| r.malformed("unknown dtype tag"))?;
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize);
            }
            let numel: usize = shape.iter().product();
            let data: Vec<f64> = match dtype {
                DType::F64 => r
                    .take(numel.checked_mul(8).ok_or_else(|| r.malformed("extent overflow"))?)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                DType::F32 => r
                    .take(numel.checked_mul(4).ok_or_else(|| r.malformed("extent overflow"))?)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
            };
            let tensor = Tensor::new(shape, data).map_err(|_| r.malformed("invalid entry shape"))?;
            entries.push(Entry { name, dtype, tensor });
        }
        if r.pos != bytes.len() {
            return Err(r.malformed("trailing bytes"));
        }
        Ok(Self { metadata, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(Error::io(&tmp))?;
        fs::rename(&tmp, path).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { path: self.path.to_path_buf() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn malformed(&self, reason: &str) -> Error {
        Error::Malformed { path: self.path.to_path_buf(), reason: reason.to_string() }
    }
}
