//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "STGATCKP"
//! version      u32
//! config_len   u64, followed by that many bytes of UTF-8 config text
//! entry_count  u32
//! entry*       kind u8 (0 = parameter, 1 = buffer)
//!              name_len u32, name bytes
//!              ndim u32, dims u64 × ndim
//!              payload f64 × product(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::params::{Init, ParamStore};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STGATCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    Parameter,
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// Effective configuration the parameters were produced with.
    pub config: String,
    pub entries: Vec<CheckpointEntry>,
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl Checkpoint {
    pub fn from_store<F: Element>(store: &ParamStore<F>, config: impl Into<String>) -> Self {
        let mut entries: Vec<CheckpointEntry> = store
            .iter()
            .map(|(_, p)| CheckpointEntry {
                name: p.name.clone(),
                kind: EntryKind::Parameter,
                shape: p.value.shape().to_vec(),
                data: p.value.to_f64_vec(),
            })
            .collect();
        entries.extend(store.buffers().map(|(name, t)| CheckpointEntry {
            name: name.clone(),
            kind: EntryKind::Buffer,
            shape: t.shape().to_vec(),
            data: t.to_f64_vec(),
        }));
        Self {
            version: CHECKPOINT_VERSION,
            config: config.into(),
            entries,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&(self.config.len() as u64).to_le_bytes())?;
        w.write_all(self.config.as_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&[match e.kind {
                EntryKind::Parameter => 0,
                EntryKind::Buffer => 1,
            }])?;
            w.write_all(&(e.name.len() as u32).to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            w.write_all(&(e.shape.len() as u32).to_le_bytes())?;
            for &d in &e.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &e.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let clen = read_u64(&mut r)? as usize;
        let mut cbytes = vec![0u8; clen];
        r.read_exact(&mut cbytes)?;
        let config = String::from_utf8(cbytes).map_err(|_| bad("config is not UTF-8"))?;
        let count = read_u32(&mut r)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            let kind = match kind[0] {
                0 => EntryKind::Parameter,
                1 => EntryKind::Buffer,
                k => return Err(bad(format!("unknown entry kind {k}"))),
            };
            let nlen = read_u32(&mut r)? as usize;
            let mut nb = vec![0u8; nlen];
            r.read_exact(&mut nb)?;
            let name = String::from_utf8(nb).map_err(|_| bad("entry name is not UTF-8"))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            entries.push(CheckpointEntry {
                name,
                kind,
                shape,
                data,
            });
        }
        Ok(Self {
            version,
            config,
            entries,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Copies every entry into an existing store. Names, kinds and shapes
    /// must match the store exactly.
    pub fn restore_into<F: Element>(&self, store: &mut ParamStore<F>) -> Result<()> {
        let n_buffers = store.buffers().count();
        let n_expected = store.len() + n_buffers;
        if self.entries.len() != n_expected {
            return Err(bad(format!(
                "checkpoint has {} entries, model expects {n_expected}",
                self.entries.len()
            )));
        }
        for e in &self.entries {
            let t = Tensor::new(e.shape.clone(), e.data.iter().map(|&v| F::lit(v)).collect())?;
            let target = match e.kind {
                EntryKind::Parameter => store.value_mut(store.id(&e.name)?),
                EntryKind::Buffer => store
                    .buffer_mut(&e.name)
                    .ok_or_else(|| bad(format!("unknown buffer `{}`", e.name)))?,
            };
            if target.shape() != t.shape() {
                return Err(TensorError::Shape {
                    op: "checkpoint restore",
                    lhs: target.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            *target = t;
        }
        Ok(())
    }

    /// Builds a fresh store holding exactly the checkpoint's entries.
    pub fn to_store<F: Element>(&self) -> Result<ParamStore<F>> {
        let mut store = ParamStore::new();
        for e in &self.entries {
            let t = Tensor::new(e.shape.clone(), e.data.iter().map(|&v| F::lit(v)).collect())?;
            match e.kind {
                EntryKind::Parameter => {
                    store.insert(e.name.clone(), t, Init::Zeros)?;
                }
                EntryKind::Buffer => store.set_buffer(e.name.clone(), t)?,
            }
        }
        Ok(store)
    }
}
