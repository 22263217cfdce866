//! Binary dataset container, all integers little-endian:
//!
//! ```text
//! magic    4 bytes "SKDS"
//! version  u8 (= 1)
//! count    u32
//! record*  M u32, C u32, T u32, N u32, label i64 (-1 = none), source u8,
//!          payload f64 × M·C·T·N in (M, C, T, N) row-major order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::sequence::{SkeletonSequence, SourceFormat};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"SKDS";
pub const DATASET_VERSION: u8 = 1;

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Data(format!("dataset file: {}", msg.into()))
}

fn read_exact<const K: usize>(r: &mut impl Read, what: &str) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)
        .map_err(|_| corrupt(format!("truncated while reading {what}")))?;
    Ok(b)
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r, what)?))
}

pub fn write_dataset(mut w: impl Write, samples: &[SkeletonSequence]) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&[DATASET_VERSION])?;
    let count = u32::try_from(samples.len()).map_err(|_| corrupt("too many samples"))?;
    w.write_all(&count.to_le_bytes())?;
    for s in samples {
        for d in s.dims() {
            let d = u32::try_from(d).map_err(|_| corrupt("dimension exceeds u32"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        let label = s.label.map(|l| l as i64).unwrap_or(-1);
        w.write_all(&label.to_le_bytes())?;
        w.write_all(&[s.source.tag()])?;
        for v in s.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(mut r: impl Read) -> Result<Vec<SkeletonSequence>> {
    let magic = read_exact::<4>(&mut r, "magic")?;
    if &magic != DATASET_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let [version] = read_exact::<1>(&mut r, "version")?;
    if version != DATASET_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r, "sample count")? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = read_u32(&mut r, "record header")? as usize;
        }
        let label = i64::from_le_bytes(read_exact::<8>(&mut r, "label")?);
        let [tag] = read_exact::<1>(&mut r, "source tag")?;
        let source = SourceFormat::from_tag(tag)
            .ok_or_else(|| corrupt(format!("record {i}: unknown source tag {tag}")))?;
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt(format!("record {i}: dims overflow")))?;
        let mut data = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            data.push(f64::from_le_bytes(read_exact::<8>(&mut r, "payload")?));
        }
        let label = if label < 0 {
            None
        } else {
            Some(label as usize)
        };
        out.push(SkeletonSequence::new(dims, data, label, source)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after last record"));
    }
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, samples: &[SkeletonSequence]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<SkeletonSequence>> {
    read_dataset(BufReader::new(File::open(path)?))
}
