//! Binary file formats.
//!
//! All integers are little-endian. Layouts are bit-exact:
//!
//! * `DMAT` dense matrix: magic `DMAT`, version `u8` = 1, dtype `u8` = 0
//!   (float32), reserved `u16` = 0, rows `u32`, cols `u32`, then
//!   `rows * cols` float32 values in row-major order.
//! * `DLBL` labels: magic `DLBL`, version `u8` = 1, count `u32`, then per
//!   sample a label-count `u16` followed by that many `u32` label ids.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub(crate) const DMAT_MAGIC: &[u8; 4] = b"DMAT";
pub(crate) const DLBL_MAGIC: &[u8; 4] = b"DLBL";

/// Byte-slice reader that tracks the current offset for error reporting.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(
                self.buf.len() as u64,
                format!(
                    "truncated while reading {what} ({n} bytes needed at offset {})",
                    self.pos
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let off = self.offset();
        let got = self.take(4, "magic")?;
        if got != expect {
            return Err(Error::format(
                off,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expect)
                ),
            ));
        }
        Ok(())
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Fails if any input remains.
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("{} trailing bytes after payload", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

/// Reads a `DMAT` file. Values are stored as float32 and converted to the
/// requested scalar type.
pub fn read_matrix<T: Real>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let buf = fs::read(path.as_ref())?;
    let mut cur = Cursor::new(&buf);
    cur.magic(DMAT_MAGIC)?;
    let off = cur.offset();
    let version = cur.u8("version")?;
    if version != 1 {
        return Err(Error::format(off, format!("unsupported version {version}")));
    }
    let off = cur.offset();
    let dtype = cur.u8("dtype")?;
    if dtype != 0 {
        return Err(Error::format(off, format!("unsupported dtype {dtype}")));
    }
    let off = cur.offset();
    let reserved = cur.u16("reserved")?;
    if reserved != 0 {
        return Err(Error::format(
            off,
            "reserved bytes must be zero".to_string(),
        ));
    }
    let dims_off = cur.offset();
    let rows = cur.u32("rows")? as usize;
    let cols = cur.u32("cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(
            dims_off,
            format!("empty dimensions {rows}x{cols}"),
        ));
    }
    let count = (rows as u64)
        .checked_mul(cols as u64)
        .filter(|&c| c <= usize::MAX as u64 / 4)
        .ok_or_else(|| Error::format(dims_off, format!("dimension overflow {rows}x{cols}")))?;

    let mut values = Vec::with_capacity(count as usize);
    for i in 0..count {
        let off = cur.offset();
        let v = cur.f32(&format!("value {i}"))?;
        if !v.is_finite() {
            return Err(Error::format(off, format!("non-finite value {v}")));
        }
        values.push(T::from_f64_lossy(v as f64));
    }
    cur.finish()?;
    Ok(Matrix::from_row_major(rows, cols, &values))
}

/// Writes a matrix as `DMAT` (float32 storage).
pub fn write_matrix<T: Real>(m: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    assert!(
        m.rows() >= 1 && m.cols() >= 1,
        "empty matrices are not serializable"
    );
    let mut buf = Vec::with_capacity(16 + 4 * m.rows() * m.cols());
    buf.extend_from_slice(DMAT_MAGIC);
    buf.push(1); // version
    buf.push(0); // dtype float32
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let v = m.at(r, c).to_f64_lossy() as f32;
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path.as_ref(), buf)?;
    Ok(())
}

/// Reads a `DLBL` file into per-sample label-id sets (sorted, deduplicated).
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<Vec<u32>>> {
    let buf = fs::read(path.as_ref())?;
    let mut cur = Cursor::new(&buf);
    cur.magic(DLBL_MAGIC)?;
    let off = cur.offset();
    let version = cur.u8("version")?;
    if version != 1 {
        return Err(Error::format(off, format!("unsupported version {version}")));
    }
    let count = cur.u32("count")? as usize;
    let mut sets = Vec::with_capacity(count);
    for i in 0..count {
        let off = cur.offset();
        let n = cur.u16(&format!("label count of sample {i}"))? as usize;
        if n == 0 {
            return Err(Error::format(off, format!("sample {i} has no labels")));
        }
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(cur.u32("label id")?);
        }
        ids.sort_unstable();
        ids.dedup();
        sets.push(ids);
    }
    cur.finish()?;
    Ok(sets)
}

/// Writes per-sample label sets as `DLBL`. Sets are canonicalized
/// (sorted, deduplicated) before writing.
pub fn write_labels(sets: &[Vec<u32>], path: impl AsRef<Path>) -> Result<()> {
    assert!(
        sets.iter().all(|s| !s.is_empty()),
        "every sample needs at least one label"
    );
    let mut buf = Vec::new();
    buf.extend_from_slice(DLBL_MAGIC);
    buf.push(1);
    buf.extend_from_slice(&(sets.len() as u32).to_le_bytes());
    for set in sets {
        let mut ids = set.clone();
        ids.sort_unstable();
        ids.dedup();
        buf.extend_from_slice(&(ids.len() as u16).to_le_bytes());
        for id in ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
    }
    fs::write(path.as_ref(), buf)?;
    Ok(())
}
