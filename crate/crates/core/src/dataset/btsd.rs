//! BTSD: a little-endian binary container for labelled multichannel series.
//!
//! Header: magic `0x42545344`, then u32 version (1), N, T, C, num_classes,
//! num_subjects. Each of the N records holds `T * C` f32 values (time-major),
//! a u16 label and a u16 subject id.

use std::fs;
use std::path::Path;

use super::TimeSeriesBatch;
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const MAGIC: u32 = 0x4254_5344;
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

pub fn encode(batch: &TimeSeriesBatch) -> Result<Vec<u8>> {
    if batch.num_classes > u16::MAX as usize + 1 || batch.num_subjects > u16::MAX as usize + 1 {
        return Err(Error::Validation("class and subject ids must fit in 16 bits".into()));
    }
    let (n, t, c) = (batch.len(), batch.length(), batch.channels());
    let mut out = Vec::with_capacity(HEADER_LEN + n * (t * c * 4 + 4));
    for v in [MAGIC, VERSION, n as u32, t as u32, c as u32, batch.num_classes as u32, batch.num_subjects as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let row = t * c;
    for i in 0..n {
        for v in &batch.x.data()[i * row..(i + 1) * row] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(batch.labels[i] as u16).to_le_bytes());
        out.extend_from_slice(&(batch.subjects[i] as u16).to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Format { offset: self.bytes.len() as u64, message: format!("file truncated while reading {what}") });
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TimeSeriesBatch> {
    let mut r = Reader { bytes, at: 0 };
    let magic = r.u32("magic")?;
    if magic != MAGIC {
        return Err(Error::Format { offset: 0, message: format!("bad magic {magic:#010x}") });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format { offset: 4, message: format!("unsupported version {version}") });
    }
    let n = r.u32("sample count")? as usize;
    let t = r.u32("length")? as usize;
    let c = r.u32("channel count")? as usize;
    let num_classes = r.u32("class count")? as usize;
    let num_subjects = r.u32("subject count")? as usize;
    let row = t.checked_mul(c).ok_or_else(|| Error::Format { offset: 12, message: "T * C overflows".into() })?;
    let mut x = Vec::with_capacity(n.min(1 << 20) * row);
    let mut labels = Vec::with_capacity(n.min(1 << 20));
    let mut subjects = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let start = r.at as u64;
        let raw = r.take(row * 4, "record values")?;
        x.extend(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64));
        let y = r.u16("label")? as usize;
        let s = r.u16("subject")? as usize;
        if y >= num_classes || s >= num_subjects {
            return Err(Error::Format { offset: start, message: format!("record {i} has label {y} / subject {s} out of range") });
        }
        labels.push(y);
        subjects.push(s);
    }
    if r.at != bytes.len() {
        return Err(Error::Format { offset: r.at as u64, message: format!("{} trailing bytes", bytes.len() - r.at) });
    }
    TimeSeriesBatch::new(Tensor::new(vec![n, t, c], x)?, labels, subjects, num_classes, num_subjects)
}

pub fn write_btsd(path: &Path, batch: &TimeSeriesBatch) -> Result<()> {
    fs::write(path, encode(batch)?)?;
    Ok(())
}

pub fn read_btsd(path: &Path) -> Result<TimeSeriesBatch> {
    decode(&fs::read(path)?)
}
