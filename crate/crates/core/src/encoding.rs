//! k-hot encodings of ordinal feature vectors.
//!
//! Every original column becomes a block of binary columns. Value 0 is always
//! the all-zeros code; a value `v >= 1` sets `k` consecutive ones starting at
//! block position `v - 1`. For `k <= 2` the block width equals the column's
//! cardinality, so one-hot and two-hot over four categories look like this:
//!
//! | value | one-hot      | two-hot      |
//! |-------|--------------|--------------|
//! | 0     | `[0,0,0,0]`  | `[0,0,0,0]`  |
//! | 1     | `[1,0,0,0]`  | `[1,1,0,0]`  |
//! | 2     | `[0,1,0,0]`  | `[0,1,1,0]`  |
//! | 3     | `[0,0,1,0]`  | `[0,0,1,1]`  |
//!
//! For `k >= 3` (e.g. nine-hot) the block is `(c - 1) + (k - 1)` wide, the
//! narrowest width in which the largest value's run still fits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    k: usize,
    cardinalities: Vec<u32>,
}

impl EncoderSpec {
    pub fn new(k: usize, cardinalities: Vec<u32>) -> Result<EncoderSpec> {
        if k == 0 {
            return Err(Error::InvalidArgument("k-hot encoder needs k >= 1".into()));
        }
        if let Some(j) = cardinalities.iter().position(|&c| c < 2) {
            return Err(Error::InvalidArgument(format!(
                "column f{j} has cardinality {} (< 2)",
                cardinalities[j]
            )));
        }
        Ok(EncoderSpec { k, cardinalities })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cardinalities(&self) -> &[u32] {
        &self.cardinalities
    }

    pub fn block_width(&self, cardinality: u32) -> usize {
        let c = cardinality as usize;
        if self.k <= 2 {
            c
        } else {
            (c - 1) + (self.k - 1)
        }
    }

    /// Start column of each original feature's block.
    pub fn column_offsets(&self) -> Vec<usize> {
        self.cardinalities
            .iter()
            .scan(0, |acc, &c| {
                let start = *acc;
                *acc += self.block_width(c);
                Some(start)
            })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.cardinalities.iter().map(|&c| self.block_width(c)).sum()
    }

    /// Spreads one weight per original column across that column's block.
    pub fn expand_column_weights(&self, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.cardinalities.len() {
            return Err(Error::DimensionMismatch { expected: self.cardinalities.len(), got: weights.len() });
        }
        Ok(self
            .cardinalities
            .iter()
            .zip(weights)
            .flat_map(|(&c, &w)| std::iter::repeat_n(w, self.block_width(c)))
            .collect())
    }

    fn encode_row_into(&self, features: &[u32], out: &mut [u8]) -> Result<()> {
        if features.len() != self.cardinalities.len() {
            return Err(Error::DimensionMismatch { expected: self.cardinalities.len(), got: features.len() });
        }
        let mut offset = 0;
        for (j, (&v, &c)) in features.iter().zip(&self.cardinalities).enumerate() {
            if v >= c {
                return Err(Error::Schema(format!("column f{j}: value {v} outside cardinality {c}")));
            }
            if v >= 1 {
                let start = offset + v as usize - 1;
                out[start..start + self.k].fill(1);
            }
            offset += self.block_width(c);
        }
        Ok(())
    }
}

/// Binary matrix produced by [`encode`], one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub data: DMatrix<u8>,
    pub column_offsets: Vec<usize>,
    pub spec: EncoderSpec,
}

impl EncodedMatrix {
    pub fn to_f64(&self) -> DMatrix<f64> {
        self.data.map(f64::from)
    }
}

pub fn encode(ds: &TaskDataset, spec: &EncoderSpec) -> Result<EncodedMatrix> {
    encode_rows(&ds.features(), spec)
}

pub fn encode_rows(rows: &[&[u32]], spec: &EncoderSpec) -> Result<EncodedMatrix> {
    let width = spec.width();
    let mut flat = vec![0u8; rows.len() * width];
    for (row, chunk) in rows.iter().zip(flat.chunks_mut(width.max(1))) {
        spec.encode_row_into(row, chunk)?;
    }
    Ok(EncodedMatrix {
        data: DMatrix::from_row_slice(rows.len(), width, &flat),
        column_offsets: spec.column_offsets(),
        spec: spec.clone(),
    })
}

/// Inverts [`encode`], rejecting rows whose blocks are not a valid k-hot code.
pub fn decode(m: &EncodedMatrix) -> Result<Vec<Vec<u32>>> {
    let spec = &m.spec;
    let k = spec.k;
    (0..m.data.nrows())
        .map(|row| {
            let mut values = Vec::with_capacity(spec.cardinalities.len());
            for (&offset, &c) in m.column_offsets.iter().zip(&spec.cardinalities) {
                let width = spec.block_width(c);
                let block: Vec<u8> = (offset..offset + width).map(|col| m.data[(row, col)]).collect();
                let err = |reason: String| Error::Structure { row, reason };
                if let Some(bad) = block.iter().find(|&&b| b > 1) {
                    return Err(err(format!("non-binary entry {bad}")));
                }
                let ones: Vec<usize> = (0..width).filter(|&i| block[i] == 1).collect();
                let Some(&first) = ones.first() else {
                    values.push(0);
                    continue;
                };
                let expected: Vec<usize> = (first..first + k).collect();
                if ones != expected {
                    return Err(err(format!(
                        "block at column {offset} has ones at {ones:?}, expected {k} consecutive"
                    )));
                }
                let v = first as u32 + 1;
                if v >= c {
                    return Err(err(format!(
                        "block at column {offset} decodes to {v}, outside cardinality {c}"
                    )));
                }
                values.push(v);
            }
            Ok(values)
        })
        .collect()
}

/// How raw ordinal features are turned into kernel inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureEncoding {
    /// Ordinal codes used directly as real coordinates.
    Ordinal,
    KHot {
        k: usize,
    },
}

impl FeatureEncoding {
    /// Encodes `rows` under `cardinalities`, widening constant columns to 2.
    pub fn matrix(&self, rows: &[&[u32]], cardinalities: &[u32]) -> Result<DMatrix<f64>> {
        match *self {
            FeatureEncoding::Ordinal => {
                let d = cardinalities.len();
                for r in rows {
                    if r.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, got: r.len() });
                    }
                }
                Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j] as f64))
            }
            FeatureEncoding::KHot { k } => Ok(encode_rows(rows, &self.spec_for(cardinalities, k)?)?.to_f64()),
        }
    }

    /// Expands per-column weights to this encoding's coordinates.
    pub fn expand_column_weights(&self, weights: &[f64], cardinalities: &[u32]) -> Result<Vec<f64>> {
        match *self {
            FeatureEncoding::Ordinal => {
                if weights.len() != cardinalities.len() {
                    return Err(Error::DimensionMismatch {
                        expected: cardinalities.len(),
                        got: weights.len(),
                    });
                }
                Ok(weights.to_vec())
            }
            FeatureEncoding::KHot { k } => self.spec_for(cardinalities, k)?.expand_column_weights(weights),
        }
    }

    pub fn width(&self, cardinalities: &[u32]) -> Result<usize> {
        match *self {
            FeatureEncoding::Ordinal => Ok(cardinalities.len()),
            FeatureEncoding::KHot { k } => Ok(self.spec_for(cardinalities, k)?.width()),
        }
    }

    fn spec_for(&self, cardinalities: &[u32], k: usize) -> Result<EncoderSpec> {
        EncoderSpec::new(k, cardinalities.iter().map(|&c| c.max(2)).collect())
    }
}
