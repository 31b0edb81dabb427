//! Packed binary codes and exact Hamming top-k search.
//!
//! Bit `ℓ` of a code lives at word `⌊ℓ/64⌋`, bit `ℓ mod 64`; pad bits beyond
//! the code length are zero. Distances are XOR + popcount over a full linear
//! scan, which is exact and fast at the scales this crate targets.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::Cursor;
use crate::optim::BinaryCodes;

const DIDX_MAGIC: &[u8; 4] = b"DIDX";

/// One packed code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCode {
    code_length: usize,
    words: Vec<u64>,
}

/// Packs a {0,1} bit sequence. Panics on non-binary entries.
pub fn pack(bits: &[u8]) -> PackedCode {
    let words_per_code = bits.len().div_ceil(64);
    let mut words = vec![0u64; words_per_code];
    for (l, &b) in bits.iter().enumerate() {
        assert!(b <= 1, "bit {l} is {b}, expected 0 or 1");
        if b == 1 {
            words[l / 64] |= 1u64 << (l % 64);
        }
    }
    PackedCode {
        code_length: bits.len(),
        words,
    }
}

impl PackedCode {
    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Inverse of [`pack`].
    pub fn unpack(&self) -> Vec<u8> {
        (0..self.code_length)
            .map(|l| ((self.words[l / 64] >> (l % 64)) & 1) as u8)
            .collect()
    }
}

/// XOR-popcount Hamming distance.
pub fn hamming(a: &PackedCode, b: &PackedCode) -> Result<u32> {
    if a.code_length != b.code_length {
        return Err(Error::Dimension(format!(
            "code lengths differ: {} vs {}",
            a.code_length, b.code_length
        )));
    }
    Ok(hamming_words(&a.words, &b.words))
}

#[inline]
fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| (x ^ y).count_ones()).sum()
}

/// Immutable database of packed codes with external sample ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedCodeIndex {
    code_length: usize,
    words_per_code: usize,
    ids: Vec<u64>,
    storage: Vec<u64>,
}

impl PackedCodeIndex {
    /// Builds from binary codes and aligned external ids. Ids must be unique.
    pub fn build(codes: &BinaryCodes, ids: &[u64]) -> Result<Self> {
        if codes.len() != ids.len() {
            return Err(Error::Dimension(format!(
                "{} codes but {} ids",
                codes.len(),
                ids.len()
            )));
        }
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate ids in index".into()));
        }
        let code_length = codes.code_length();
        let words_per_code = code_length.div_ceil(64);
        let mut storage = Vec::with_capacity(codes.len() * words_per_code);
        for n in 0..codes.len() {
            storage.extend_from_slice(&pack(codes.column(n)).words);
        }
        Ok(PackedCodeIndex {
            code_length,
            words_per_code,
            ids: ids.to_vec(),
            storage,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    fn words_of(&self, row: usize) -> &[u64] {
        &self.storage[row * self.words_per_code..(row + 1) * self.words_per_code]
    }

    /// Packed code of a row.
    pub fn code(&self, row: usize) -> PackedCode {
        PackedCode {
            code_length: self.code_length,
            words: self.words_of(row).to_vec(),
        }
    }

    /// The `k` nearest codes by Hamming distance, sorted ascending; ties
    /// break toward the lower id. Exact full scan.
    pub fn search_topk(&self, query: &PackedCode, k: usize) -> Result<Vec<(u64, u32)>> {
        if query.code_length != self.code_length {
            return Err(Error::Dimension(format!(
                "query has {} bits, index {}",
                query.code_length, self.code_length
            )));
        }
        if k > self.len() {
            return Err(Error::Config(format!(
                "k={k} exceeds index size {}",
                self.len()
            )));
        }
        // Bounded max-heap on (distance, id).
        let mut heap: std::collections::BinaryHeap<(u32, u64)> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        for row in 0..self.len() {
            let d = hamming_words(&query.words, self.words_of(row));
            let entry = (d, self.ids[row]);
            if heap.len() < k {
                heap.push(entry);
            } else if let Some(&top) = heap.peek() {
                if entry < top {
                    heap.pop();
                    heap.push(entry);
                }
            }
        }
        let mut out: Vec<(u32, u64)> = heap.into_vec();
        out.sort_unstable();
        Ok(out.into_iter().map(|(d, id)| (id, d)).collect())
    }

    /// Writes the `DIDX` file: magic, `u32` version=1, `u32` L, `u64` n,
    /// n ids (`u64`), then `n·⌈L/64⌉` words (`u64`), all little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(20 + 8 * self.ids.len() + 8 * self.storage.len());
        buf.extend_from_slice(DIDX_MAGIC);
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&(self.code_length as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for &id in &self.ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        for &w in &self.storage {
            buf.extend_from_slice(&w.to_le_bytes());
        }
        fs::write(path.as_ref(), buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let buf = fs::read(path.as_ref())?;
        let mut cur = Cursor::new(&buf);
        cur.magic(DIDX_MAGIC)?;
        let off = cur.offset();
        let version = cur.u32("version")?;
        if version != 1 {
            return Err(Error::format(off, format!("unsupported version {version}")));
        }
        let code_length = cur.u32("code length")? as usize;
        if code_length == 0 {
            return Err(Error::format(8, "zero code length".to_string()));
        }
        let n = cur.u64("count")? as usize;
        let words_per_code = code_length.div_ceil(64);
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(cur.u64("id")?);
        }
        let mut storage = Vec::with_capacity(n * words_per_code);
        let pad_mask = pad_mask(code_length);
        for row in 0..n {
            for w in 0..words_per_code {
                let off = cur.offset();
                let word = cur.u64("code word")?;
                if w == words_per_code - 1 && word & pad_mask != 0 {
                    return Err(Error::format(
                        off,
                        format!("pad bits set in code of row {row}"),
                    ));
                }
                storage.push(word);
            }
        }
        cur.finish()?;
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::format(16, "duplicate ids".to_string()));
        }
        Ok(PackedCodeIndex {
            code_length,
            words_per_code,
            ids,
            storage,
        })
    }
}

/// Mask of the unused bits in the last word.
fn pad_mask(code_length: usize) -> u64 {
    let used = code_length % 64;
    if used == 0 {
        0
    } else {
        !0u64 << used
    }
}
