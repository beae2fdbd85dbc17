//! The GPWF binary field format.
//!
//! Layout (all little-endian):
//!
//! | bytes            | content                                   |
//! |------------------|-------------------------------------------|
//! | 4                | magic `GPWF`                              |
//! | u32              | format version, currently 1               |
//! | u32              | dim                                       |
//! | u32 x dim        | per-axis sample counts                    |
//! | f64              | spacing h                                 |
//! | f64              | half length N                             |
//! | f64              | transverse half length M                  |
//! | u8               | transverse BC (0 Dirichlet, 1 periodic)   |
//! | f64              | speed c, NaN when none                    |
//! | 2 x f64 x len    | interleaved (re, im), row-major           |
//!
//! One-dimensional fixtures use `dim = 1` and `M = 0`.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::field::Field;
use crate::grid::{Grid, TransverseBc};

pub const MAGIC: &[u8; 4] = b"GPWF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GpwfError {
    #[error("I/O error")]
    Io(#[from] std::io::Error),
    #[error("malformed GPWF data at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unsupported GPWF version {version} (expected {VERSION})")]
    UnsupportedVersion { version: u32 },
}

/// A field together with the speed it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredField {
    pub field: Field,
    pub c: Option<f64>,
}

pub fn encode(field: &Field, c: Option<f64>) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(64 + 16 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for &n in g.counts() {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.extend_from_slice(&g.spacing().to_le_bytes());
    out.extend_from_slice(&g.half_length_x1().to_le_bytes());
    out.extend_from_slice(&g.half_length_transverse().to_le_bytes());
    out.push(g.bc_transverse().code());
    out.extend_from_slice(&c.unwrap_or(f64::NAN).to_le_bytes());
    for z in field.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], GpwfError> {
        if self.bytes.len() - self.pos < n {
            return Err(GpwfError::Malformed {
                offset: self.bytes.len(),
                reason: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, GpwfError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, GpwfError> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<StoredField, GpwfError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if let Some(i) = magic.iter().zip(MAGIC).position(|(a, b)| a != b) {
        return Err(GpwfError::Malformed {
            offset: i,
            reason: "bad magic".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(GpwfError::UnsupportedVersion { version });
    }
    let dim_offset = r.pos;
    let dim = r.u32("dim")? as usize;
    if !(1..=3).contains(&dim) {
        return Err(GpwfError::Malformed {
            offset: dim_offset,
            reason: format!("dimension {dim} not in 1..=3"),
        });
    }
    let counts_offset = r.pos;
    let mut counts = Vec::with_capacity(dim);
    for _ in 0..dim {
        counts.push(r.u32("counts")? as usize);
    }
    let header_offset = r.pos;
    let h = r.f64("h")?;
    let n = r.f64("N")?;
    let m = r.f64("M")?;
    let bc_offset = r.pos;
    let bc_code = r.take(1, "bc_transverse")?[0];
    let bc = TransverseBc::from_code(bc_code).ok_or_else(|| GpwfError::Malformed {
        offset: bc_offset,
        reason: format!("unknown transverse BC code {bc_code}"),
    })?;
    let c = r.f64("c")?;
    let grid = Grid::from_header(dim, &counts, h, n, m, bc).map_err(|e| GpwfError::Malformed {
        offset: if matches!(e, crate::grid::GridError::NonIntegralExtent { name: "counts", .. }) {
            counts_offset
        } else {
            header_offset
        },
        reason: format!("inconsistent grid header: {e}"),
    })?;
    let expected = 16 * grid.len();
    let remaining = bytes.len() - r.pos;
    if remaining < expected {
        return Err(GpwfError::Malformed {
            offset: bytes.len(),
            reason: format!("truncated values: need {expected} bytes, have {remaining}"),
        });
    }
    if remaining > expected {
        return Err(GpwfError::Malformed {
            offset: r.pos + expected,
            reason: "trailing bytes after values".into(),
        });
    }
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let re = r.f64("values")?;
        let im = r.f64("values")?;
        values.push(Complex64::new(re, im));
    }
    let field = Field::new(grid, values).expect("length checked");
    Ok(StoredField {
        field,
        c: if c.is_nan() { None } else { Some(c) },
    })
}

/// Writes the field atomically (temporary file in the target directory,
/// then rename).
pub fn write_field(path: &Path, field: &Field, c: Option<f64>) -> Result<(), GpwfError> {
    write_atomic(path, &encode(field, c))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<StoredField, GpwfError> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

/// Whole-file atomic write: temporary sibling file, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
