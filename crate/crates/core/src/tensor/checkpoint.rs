//! Binary tensor checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TSTY" | version: u16 | count: u32 |
//!   count x ( name_len: u32 | name: utf-8 | rank: u32 | extents: rank x u32 |
//!             precision: u8 (0 = f32, 1 = f64) | values: raw LE elements )
//! ```
//!
//! Values are held as `f64` in memory; both precisions round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{numel, Float, Params, Precision, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TSTY";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub precision: Precision,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push<T: Float>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        let name = name.into();
        self.entries.retain(|e| e.name != name);
        self.entries.push(Entry {
            name,
            precision: T::PRECISION,
            shape: t.shape().to_vec(),
            values: t.to_f64_vec(),
        });
    }

    pub fn push_params<T: Float>(&mut self, prefix: &str, params: &Params<T>) {
        for (name, t) in params.iter() {
            self.push(format!("{prefix}{name}"), t);
        }
    }

    pub fn get<T: Float>(&self, name: &str) -> Option<Tensor<T>> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| Tensor::from_f64(e.shape.clone(), &e.values).expect("validated on read"))
    }

    /// Every entry under `prefix`, with the prefix stripped.
    pub fn params<T: Float>(&self, prefix: &str) -> Params<T> {
        self.entries
            .iter()
            .filter_map(|e| {
                e.name.strip_prefix(prefix).map(|n| {
                    (
                        n.to_string(),
                        Tensor::from_f64(e.shape.clone(), &e.values).expect("validated on read"),
                    )
                })
            })
            .collect()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.shape.len() as u32).to_le_bytes());
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.push(e.precision.tag());
            match e.precision {
                Precision::F32 => e.values.iter().for_each(|&v| (v as f32).write_le(&mut out)),
                Precision::F64 => e.values.iter().for_each(|&v| v.write_le(&mut out)),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("tensor name is not utf-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let tag = r.take(1)?[0];
            let precision =
                Precision::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown precision tag {tag}")))?;
            let n = numel(&shape);
            let raw = r.take(n * precision.width())?;
            let values = match precision {
                Precision::F32 => raw.chunks_exact(4).map(|c| f32::read_le(c) as f64).collect(),
                Precision::F64 => raw.chunks_exact(8).map(f64::read_le).collect(),
            };
            entries.push(Entry {
                name,
                precision,
                shape,
                values,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last tensor".into()));
        }
        Ok(Checkpoint { entries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp~");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
