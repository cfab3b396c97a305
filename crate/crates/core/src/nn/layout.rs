use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
}

/// One contiguous slice of the flat parameter vector.
///
/// Weight slices are stored input-major: entry `i * fan_out + o` connects
/// input unit `i` to output unit `o`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSlice {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub fan_in: usize,
    pub fan_out: usize,
    pub kind: ParamKind,
}

impl LayerSlice {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    layers: Vec<LayerSlice>,
    total: usize,
}

impl LayerLayout {
    /// Validates that `layers` tile `[0, d)` in order and that every slice
    /// length agrees with its fan-in/fan-out.
    pub fn new(layers: Vec<LayerSlice>) -> Result<Self> {
        let mut cursor = 0;
        for layer in &layers {
            if layer.offset != cursor {
                return Err(Error::invalid(format!(
                    "layer {} starts at {} but previous layer ends at {}",
                    layer.name, layer.offset, cursor
                )));
            }
            let expected = match layer.kind {
                ParamKind::Weight => layer.fan_in * layer.fan_out,
                ParamKind::Bias => layer.fan_out,
            };
            if layer.len != expected || layer.len == 0 {
                return Err(Error::invalid(format!(
                    "layer {} has length {} but its shape implies {}",
                    layer.name, layer.len, expected
                )));
            }
            cursor += layer.len;
        }
        if layers.is_empty() {
            return Err(Error::Empty("layer layout"));
        }
        Ok(Self {
            layers,
            total: cursor,
        })
    }

    /// Layout of a fully connected network `input -> hidden.. -> classes`,
    /// each dense layer contributing a weight slice followed by a bias slice.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(input)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(classes))
            .collect();
        if widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut layers = Vec::with_capacity(2 * (widths.len() - 1));
        let mut offset = 0;
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            layers.push(LayerSlice {
                name: format!("fc{l}.weight"),
                offset,
                len: fan_in * fan_out,
                fan_in,
                fan_out,
                kind: ParamKind::Weight,
            });
            offset += fan_in * fan_out;
            layers.push(LayerSlice {
                name: format!("fc{l}.bias"),
                offset,
                len: fan_out,
                fan_in,
                fan_out,
                kind: ParamKind::Bias,
            });
            offset += fan_out;
        }
        Self::new(layers)
    }

    pub fn total_params(&self) -> usize {
        self.total
    }

    pub fn layers(&self) -> &[LayerSlice] {
        &self.layers
    }

    /// Dense layers as (weight, bias) pairs, checking that consecutive layers
    /// chain (`fan_out` of one equals `fan_in` of the next).
    pub fn dense_layers(&self) -> Result<Vec<(&LayerSlice, &LayerSlice)>> {
        if !self.layers.len().is_multiple_of(2) {
            return Err(Error::invalid("layout is not a sequence of weight/bias pairs"));
        }
        let pairs: Vec<_> = self
            .layers
            .chunks(2)
            .map(|c| (&c[0], &c[1]))
            .collect();
        for (i, (w, b)) in pairs.iter().enumerate() {
            if w.kind != ParamKind::Weight || b.kind != ParamKind::Bias || w.fan_out != b.fan_out {
                return Err(Error::invalid(format!("dense layer {i} is not weight+bias")));
            }
            if i > 0 && pairs[i - 1].0.fan_out != w.fan_in {
                return Err(Error::invalid(format!("dense layer {i} does not chain")));
            }
        }
        Ok(pairs)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    /// Hex SHA-256 over a canonical text rendering of the layout.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for l in &self.layers {
            let kind = match l.kind {
                ParamKind::Weight => "w",
                ParamKind::Bias => "b",
            };
            hasher.update(
                format!("{}:{}:{}:{}:{}:{};", l.name, l.offset, l.len, l.fan_in, l.fan_out, kind)
                    .as_bytes(),
            );
        }
        hex::encode(hasher.finalize())
    }
}
