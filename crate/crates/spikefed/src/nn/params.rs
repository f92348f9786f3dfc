//! Flat model parameters with a layout table mapping layers to index ranges.

use super::MlpTopology;
use crate::error::{Error, Result};
use crate::math;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One weight block: `rows` is fan-in (plus one bias row for dense layers),
/// `cols` is fan-out, and the weight of the `j -> i` connection lives at
/// `offset + j*cols + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlice {
    pub layer: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayerSlice {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat weights plus the layout that tiles them into layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub values: Vec<f32>,
    pub layout: Vec<LayerSlice>,
}

impl ParameterVector {
    /// All-zero parameters for a topology.
    pub fn zeros(topo: &MlpTopology) -> Self {
        let layout = layout_for(topo);
        let len = layout.iter().map(LayerSlice::len).sum();
        Self {
            values: vec![0.0; len],
            layout,
        }
    }

    /// Uniform Glorot initialization, `U(-b, b)` with `b = sqrt(6/(fan_in+fan_out))`.
    /// Dense bias rows start at zero.
    pub fn glorot(topo: &MlpTopology, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(topo);
        for (l, slice) in p.layout.clone().into_iter().enumerate() {
            let fan_in = topo.layer_sizes[l];
            let fan_out = topo.layer_sizes[l + 1];
            let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64) as f32;
            let weights = fan_in * slice.cols;
            for v in &mut p.values[slice.offset..slice.offset + weights] {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Weight block of layer `l` as a flat row-major slice.
    pub fn layer(&self, l: usize) -> &[f32] {
        let s = &self.layout[l];
        &self.values[s.offset..s.offset + s.len()]
    }

    /// Layout ranges must be disjoint and exactly tile the value array.
    pub fn validate_layout(&self) -> Result<()> {
        let mut slices: Vec<&LayerSlice> = self.layout.iter().collect();
        slices.sort_by_key(|s| s.offset);
        let mut next = 0usize;
        for s in slices {
            if s.offset != next {
                return Err(Error::Config(
                    "layout ranges must tile the value array without gaps or overlap".to_string(),
                ));
            }
            next += s.len();
        }
        if next != self.values.len() {
            return Err(Error::Shape {
                what: "parameter layout",
                expected: next,
                got: self.values.len(),
            });
        }
        Ok(())
    }

    /// Checkpoint encoding: `u32` block count, then one `(layer, offset,
    /// rows, cols)` quadruple of `u32` per block, then the raw `f32` values.
    /// Everything little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.layout.len() * 16 + self.values.len() * 4);
        out.extend_from_slice(&(self.layout.len() as u32).to_le_bytes());
        for s in &self.layout {
            for v in [s.layer, s.offset, s.rows, s.cols] {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let take_u32 = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .ok_or(Error::Truncated("checkpoint header"))
        };
        let n_blocks = take_u32(0)? as usize;
        let mut layout = Vec::with_capacity(n_blocks);
        let mut cursor = 4usize;
        for _ in 0..n_blocks {
            let layer = take_u32(cursor)? as usize;
            let offset = take_u32(cursor + 4)? as usize;
            let rows = take_u32(cursor + 8)? as usize;
            let cols = take_u32(cursor + 12)? as usize;
            layout.push(LayerSlice {
                layer,
                offset,
                rows,
                cols,
            });
            cursor += 16;
        }
        let len: usize = layout.iter().map(LayerSlice::len).sum();
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            let raw = take_u32(cursor).map_err(|_| Error::Truncated("checkpoint values"))?;
            values.push(f32::from_bits(raw));
            cursor += 4;
        }
        if cursor != bytes.len() {
            return Err(Error::Shape {
                what: "checkpoint length",
                expected: cursor,
                got: bytes.len(),
            });
        }
        let p = Self { values, layout };
        p.validate_layout()?;
        Ok(p)
    }
}

/// Canonical layout for an MLP topology: one block per weight matrix, in
/// layer order, densely packed. Dense blocks get one extra row holding the
/// layer bias (the input is implicitly extended with 1).
pub fn layout_for(topo: &MlpTopology) -> Vec<LayerSlice> {
    let bias = match topo.kind {
        crate::nn::ModelKind::Spiking => 0,
        crate::nn::ModelKind::Dense => 1,
    };
    let mut layout = Vec::with_capacity(topo.num_weight_layers());
    let mut offset = 0;
    for (l, w) in topo.layer_sizes.windows(2).enumerate() {
        let slice = LayerSlice {
            layer: l,
            offset,
            rows: w[0] + bias,
            cols: w[1],
        };
        offset += slice.len();
        layout.push(slice);
    }
    layout
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelKind;
    use crate::rng;

    fn topo() -> MlpTopology {
        MlpTopology::new(vec![4, 3, 2], ModelKind::Dense).unwrap()
    }

    #[test]
    fn layout_tiles_exactly() {
        // Dense layers carry one bias row each.
        let p = ParameterVector::zeros(&topo());
        assert_eq!(p.dim(), (4 + 1) * 3 + (3 + 1) * 2);
        p.validate_layout().unwrap();
        assert_eq!(p.layer(0).len(), 15);
        assert_eq!(p.layer(1).len(), 8);

        let spiking = MlpTopology::new(vec![4, 3, 2], ModelKind::Spiking).unwrap();
        assert_eq!(ParameterVector::zeros(&spiking).dim(), 4 * 3 + 3 * 2);
    }

    #[test]
    fn layout_rejects_gaps() {
        let mut p = ParameterVector::zeros(&topo());
        p.layout[1].offset += 1;
        assert!(p.validate_layout().is_err());
    }

    #[test]
    fn glorot_is_seeded_and_bounded() {
        let t = topo();
        let a = ParameterVector::glorot(&t, &mut rng::stream(7, rng::domain::INIT, 0, 0));
        let b = ParameterVector::glorot(&t, &mut rng::stream(7, rng::domain::INIT, 0, 0));
        assert_eq!(a, b);
        let bound = (6.0f64 / 7.0).sqrt() as f32;
        assert!(a.values[..12].iter().all(|v| v.abs() < bound));
        assert!(a.values.iter().any(|&v| v != 0.0));
        // Bias rows start at zero: layer 0 at 12..15, layer 1 at 21..23.
        assert!(a.values[12..15].iter().all(|&v| v == 0.0));
        assert!(a.values[15..21].iter().any(|&v| v != 0.0));
        assert!(a.values[21..23].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let t = topo();
        let p = ParameterVector::glorot(&t, &mut rng::stream(3, rng::domain::INIT, 0, 0));
        let bytes = p.to_bytes();
        let back = ParameterVector::from_bytes(&bytes).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn checkpoint_frozen_layout_bytes() {
        // 1 block of 1x2 starting at offset 0 with values [1.0, -2.0].
        let p = ParameterVector {
            values: vec![1.0, -2.0],
            layout: vec![LayerSlice {
                layer: 0,
                offset: 0,
                rows: 1,
                cols: 2,
            }],
        };
        let bytes = p.to_bytes();
        #[rustfmt::skip]
        let expected: Vec<u8> = vec![
            1, 0, 0, 0,             // block count
            0, 0, 0, 0,             // layer
            0, 0, 0, 0,             // offset
            1, 0, 0, 0,             // rows
            2, 0, 0, 0,             // cols
            0x00, 0x00, 0x80, 0x3F, // 1.0f32
            0x00, 0x00, 0x00, 0xC0, // -2.0f32
        ];
        assert_eq!(bytes, expected);
    }

    #[test]
    fn checkpoint_rejects_truncation() {
        let p = ParameterVector::zeros(&topo());
        let bytes = p.to_bytes();
        assert!(matches!(
            ParameterVector::from_bytes(&bytes[..bytes.len() - 2]),
            Err(Error::Truncated(_))
        ));
    }
}
