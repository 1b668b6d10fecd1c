//! Dataset file formats.
//!
//! - `fvecs`: per record, a little-endian i32 dimension then that many f32.
//! - `ivecs`: i32 dimension then that many i32 (ground-truth neighbor ids).
//! - `bvecs`: i32 dimension then that many u8; widened to f32 on load.
//! - `raw_f32`: 16-byte header (magic `NVGF`, u32 version = 1, u32 n, u32 d)
//!   then `n * d` f32, all little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vecstore::{Metric, VectorSet};

const RAW_MAGIC: &[u8; 4] = b"NVGF";
const RAW_VERSION: u32 = 1;
/// Sanity bound on a per-record dimension read from disk.
const MAX_DIM: usize = 1 << 24;

/// Float vector file formats understood by [`load_vectors`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Fvecs,
    Bvecs,
    RawF32,
}

impl VectorFormat {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fvecs" => Ok(VectorFormat::Fvecs),
            "bvecs" => Ok(VectorFormat::Bvecs),
            "raw_f32" | "f32" => Ok(VectorFormat::RawF32),
            other => Err(Error::InvalidParameter(format!(
                "unknown vector format {other:?}"
            ))),
        }
    }

    /// Guess from the file extension, defaulting to `raw_f32`.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("fvecs") => VectorFormat::Fvecs,
            Some("bvecs") => VectorFormat::Bvecs,
            _ => VectorFormat::RawF32,
        }
    }
}

/// Row-major integer matrix, as loaded from an ivecs file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i32>,
}

impl IdMatrix {
    pub fn row(&self, i: usize) -> &[i32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Loads a float vector file into a [`VectorSet`] tagged with `metric`.
pub fn load_vectors(path: &Path, format: VectorFormat, metric: Metric) -> Result<VectorSet> {
    let bytes = fs::read(path)?;
    let (dim, data) = match format {
        VectorFormat::Fvecs => parse_fvecs(&bytes)?,
        VectorFormat::Bvecs => parse_bvecs(&bytes)?,
        VectorFormat::RawF32 => parse_raw_f32(&bytes)?,
    };
    VectorSet::new(dim, data, metric)
}

/// Loads an ivecs file (int32 records, e.g. ground-truth neighbor ids).
pub fn load_ivecs(path: &Path) -> Result<IdMatrix> {
    let bytes = fs::read(path)?;
    let mut cols = 0usize;
    let mut data = Vec::new();
    let mut off = 0usize;
    let mut rows = 0usize;
    while off < bytes.len() {
        let d = read_record_dim(&bytes, &mut off, rows)?;
        if rows == 0 {
            cols = d;
        } else if d != cols {
            return Err(Error::Malformed(format!(
                "record {rows} has dimension {d}, expected {cols}"
            )));
        }
        if off + d * 4 > bytes.len() {
            return Err(Error::Truncated(format!("record {rows} payload")));
        }
        for i in 0..d {
            let b = &bytes[off + i * 4..off + i * 4 + 4];
            data.push(i32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        off += d * 4;
        rows += 1;
    }
    Ok(IdMatrix { rows, cols, data })
}

/// Formats accepted by [`save_vectors`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveFormat {
    Fvecs,
    RawF32,
}

/// Writes a vector set; a round trip through [`load_vectors`] is bit-exact.
pub fn save_vectors(set: &VectorSet, path: &Path, format: SaveFormat) -> Result<()> {
    let mut out = Vec::with_capacity(16 + set.data().len() * 4);
    match format {
        SaveFormat::Fvecs => {
            for row in 0..set.count() {
                out.extend_from_slice(&(set.dim() as i32).to_le_bytes());
                for &v in set.vector(row) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        SaveFormat::RawF32 => {
            out.extend_from_slice(RAW_MAGIC);
            out.extend_from_slice(&RAW_VERSION.to_le_bytes());
            out.extend_from_slice(&(set.count() as u32).to_le_bytes());
            out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
            for &v in set.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn read_record_dim(bytes: &[u8], off: &mut usize, record: usize) -> Result<usize> {
    if *off + 4 > bytes.len() {
        return Err(Error::Truncated(format!("record {record} header")));
    }
    let b = &bytes[*off..*off + 4];
    let d = i32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    *off += 4;
    if d <= 0 || d as usize > MAX_DIM {
        return Err(Error::Malformed(format!(
            "record {record} has invalid dimension {d}"
        )));
    }
    Ok(d as usize)
}

fn parse_fvecs(bytes: &[u8]) -> Result<(usize, Vec<f32>)> {
    let mut dim = 0usize;
    let mut data = Vec::new();
    let mut off = 0usize;
    let mut rows = 0usize;
    while off < bytes.len() {
        let d = read_record_dim(bytes, &mut off, rows)?;
        if rows == 0 {
            dim = d;
        } else if d != dim {
            return Err(Error::Malformed(format!(
                "record {rows} has dimension {d}, expected {dim}"
            )));
        }
        if off + d * 4 > bytes.len() {
            return Err(Error::Truncated(format!("record {rows} payload")));
        }
        for i in 0..d {
            let b = &bytes[off + i * 4..off + i * 4 + 4];
            data.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        off += d * 4;
        rows += 1;
    }
    Ok((dim, data))
}

fn parse_bvecs(bytes: &[u8]) -> Result<(usize, Vec<f32>)> {
    let mut dim = 0usize;
    let mut data = Vec::new();
    let mut off = 0usize;
    let mut rows = 0usize;
    while off < bytes.len() {
        let d = read_record_dim(bytes, &mut off, rows)?;
        if rows == 0 {
            dim = d;
        } else if d != dim {
            return Err(Error::Malformed(format!(
                "record {rows} has dimension {d}, expected {dim}"
            )));
        }
        if off + d > bytes.len() {
            return Err(Error::Truncated(format!("record {rows} payload")));
        }
        for i in 0..d {
            data.push(bytes[off + i] as f32);
        }
        off += d;
        rows += 1;
    }
    Ok((dim, data))
}

fn parse_raw_f32(bytes: &[u8]) -> Result<(usize, Vec<f32>)> {
    if bytes.len() < 16 {
        return Err(Error::Truncated("raw_f32 header".into()));
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(Error::BadMagic { expected: "NVGF" });
    }
    let word = |i: usize| {
        u32::from_le_bytes([bytes[4 * i], bytes[4 * i + 1], bytes[4 * i + 2], bytes[4 * i + 3]])
    };
    let version = word(1);
    if version != RAW_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = word(2) as usize;
    let d = word(3) as usize;
    let expected = 16 + n * d * 4;
    if bytes.len() < expected {
        return Err(Error::Truncated(format!(
            "raw_f32 payload: have {} bytes, need {expected}",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let b = &bytes[16 + i * 4..16 + i * 4 + 4];
        data.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    }
    Ok((d, data))
}
