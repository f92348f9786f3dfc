//! Top-k magnitude sparsification of client updates, the binary payload
//! layout used for bandwidth accounting, and retention frequency counters.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Bytes of the `{dim: u32, k: u32}` payload header, shared by the sparse
/// and dense wire layouts.
pub const HEADER_BYTES: u64 = 8;

/// Proportion of coordinates retained per update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionConfig {
    pub kappa: f64,
}

impl CompressionConfig {
    pub fn new(kappa: f64) -> Result<Self> {
        let cfg = Self { kappa };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::Config(format!(
                "kappa must be in (0, 1], got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Retained coordinate count: `max(1, floor(kappa * dim))`.
pub fn retained_count(kappa: f64, dim: usize) -> usize {
    let k = (kappa * dim as f64) as usize;
    k.clamp(1, dim.max(1))
}

/// Index/value compressed update. Indices are strictly increasing and all
/// below `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseUpdate {
    pub dim: u32,
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseUpdate {
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    /// Wire size: header plus one `(u32, f32)` pair per retained coordinate.
    pub fn payload_bytes(&self) -> u64 {
        sparse_payload_bytes(self.k())
    }

    /// Serialize: `{dim: u32, k: u32}` then `k` index/value pairs, all
    /// little-endian and index-sorted.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_bytes() as usize);
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&(self.indices.len() as u32).to_le_bytes());
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out.extend_from_slice(&i.to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let word = |at: usize| -> Result<[u8; 4]> {
            bytes
                .get(at..at + 4)
                .map(|b| [b[0], b[1], b[2], b[3]])
                .ok_or(Error::Truncated("sparse update payload"))
        };
        let dim = u32::from_le_bytes(word(0)?);
        let k = u32::from_le_bytes(word(4)?) as usize;
        let mut indices = Vec::with_capacity(k);
        let mut values = Vec::with_capacity(k);
        for p in 0..k {
            let at = 8 + p * 8;
            indices.push(u32::from_le_bytes(word(at)?));
            values.push(f32::from_le_bytes(word(at + 4)?));
        }
        if bytes.len() != 8 + k * 8 {
            return Err(Error::Shape {
                what: "sparse update payload",
                expected: 8 + k * 8,
                got: bytes.len(),
            });
        }
        let sp = Self {
            dim,
            indices,
            values,
        };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.values.len() {
            return Err(Error::Shape {
                what: "sparse update values",
                expected: self.indices.len(),
                got: self.values.len(),
            });
        }
        for pair in self.indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Config(
                    "sparse indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&last) = self.indices.last() {
            if last >= self.dim {
                return Err(Error::IndexOutOfRange {
                    index: last,
                    dim: self.dim,
                });
            }
        }
        Ok(())
    }
}

pub fn sparse_payload_bytes(k: usize) -> u64 {
    HEADER_BYTES + 8 * k as u64
}

pub fn dense_payload_bytes(dim: usize) -> u64 {
    HEADER_BYTES + 4 * dim as u64
}

/// Keep the `max(1, floor(kappa*d))` coordinates of largest magnitude; ties
/// broken toward the lower index so runs are bit-reproducible.
pub fn topk_compress(dense: &[f32], cfg: &CompressionConfig) -> Result<SparseUpdate> {
    cfg.validate()?;
    if dense.is_empty() {
        return Err(Error::Empty("topk_compress input"));
    }
    let d = dense.len();
    let k = retained_count(cfg.kappa, d);

    let mut order: Vec<u32> = (0..d as u32).collect();
    let by_magnitude = |&a: &u32, &b: &u32| {
        dense[b as usize]
            .abs()
            .total_cmp(&dense[a as usize].abs())
            .then(a.cmp(&b))
    };
    if k < d {
        order.select_nth_unstable_by(k - 1, by_magnitude);
    }
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    let values = indices.iter().map(|&i| dense[i as usize]).collect();

    Ok(SparseUpdate {
        dim: d as u32,
        indices,
        values,
    })
}

/// Expand back to a dense vector, zero everywhere that was dropped.
pub fn decompress(sp: &SparseUpdate) -> Result<Vec<f32>> {
    let mut dense = vec![0.0f32; sp.dim as usize];
    if sp.indices.len() != sp.values.len() {
        return Err(Error::Shape {
            what: "sparse update values",
            expected: sp.indices.len(),
            got: sp.values.len(),
        });
    }
    for (&i, &v) in sp.indices.iter().zip(&sp.values) {
        if i >= sp.dim {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: sp.dim,
            });
        }
        dense[i as usize] = v;
    }
    Ok(dense)
}

/// Counts how often each coordinate survived compression.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionCounter {
    counts: Vec<u64>,
    updates_recorded: u64,
}

impl RetentionCounter {
    pub fn new(dim: usize) -> Self {
        Self {
            counts: vec![0; dim],
            updates_recorded: 0,
        }
    }

    /// Record one compressed update: +1 on every retained index.
    pub fn record(&mut self, sp: &SparseUpdate) -> Result<()> {
        if sp.dim as usize != self.counts.len() {
            return Err(Error::Shape {
                what: "retention counter",
                expected: self.counts.len(),
                got: sp.dim as usize,
            });
        }
        for &i in &sp.indices {
            self.counts[i as usize] += 1;
        }
        self.updates_recorded += 1;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn updates_recorded(&self) -> u64 {
        self.updates_recorded
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-coordinate retention frequency, normalized by updates recorded.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.updates_recorded.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}
