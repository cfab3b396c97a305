use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LayerLayout;

/// Binary selection over the `d` coordinates of a parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    bits: Vec<bool>,
    active: usize,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let active = bits.iter().filter(|&&b| b).count();
        Self { bits, active }
    }

    pub fn ones(d: usize) -> Self {
        Self {
            bits: vec![true; d],
            active: d,
        }
    }

    pub fn from_active_indices(d: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut bits = vec![false; d];
        for i in indices {
            if i >= d {
                return Err(Error::invalid(format!("mask index {i} out of range for d = {d}")));
            }
            bits[i] = true;
        }
        Ok(Self::from_bits(bits))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of active coordinates, `k`.
    pub fn count(&self) -> usize {
        self.active
    }

    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.active as f64 / self.bits.len() as f64
        }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    /// Number of coordinates active in both masks.
    pub fn overlap(&self, other: &Mask) -> Result<usize> {
        Error::check_len("mask", self.len(), other.len())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    /// Packs the mask into `ceil(d / 8)` bytes; bit `i` lives in byte `i / 8`
    /// at position `i % 8`, least significant bit first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for i in self.active_indices() {
            out[i / 8] |= 1 << (i % 8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], d: usize) -> Result<Self> {
        Error::check_len("packed mask bytes", d.div_ceil(8), bytes.len())?;
        let bits: Vec<bool> = (0..d).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        let padding_set = (d..bytes.len() * 8).any(|i| bytes[i / 8] >> (i % 8) & 1 == 1);
        if padding_set {
            return Err(Error::Malformed("padding bits of packed mask are not zero".into()));
        }
        Ok(Self::from_bits(bits))
    }
}

/// JSON sidecar stored next to a packed mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub d: usize,
    pub k: usize,
    pub layout_hash: String,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes `<path>` (packed bits) and `<path minus extension>.json` (sidecar).
pub fn write_mask(path: &Path, mask: &Mask, layout: &LayerLayout) -> Result<MaskSidecar> {
    Error::check_len("mask", layout.total_params(), mask.len())?;
    let sidecar = MaskSidecar {
        d: mask.len(),
        k: mask.count(),
        layout_hash: layout.fingerprint(),
    };
    fs::write(path, mask.to_bytes())?;
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}

/// Reads a mask written by [`write_mask`], checking it against the sidecar
/// and, when given, the expected layout.
pub fn read_mask(path: &Path, layout: Option<&LayerLayout>) -> Result<Mask> {
    let sidecar: MaskSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if let Some(layout) = layout {
        if layout.fingerprint() != sidecar.layout_hash {
            return Err(Error::Malformed("mask was written for a different layout".into()));
        }
    }
    let mask = Mask::from_bytes(&fs::read(path)?, sidecar.d)?;
    if mask.count() != sidecar.k {
        return Err(Error::Malformed(format!(
            "sidecar says k = {} but the mask has {} active bits",
            sidecar.k,
            mask.count()
        )));
    }
    Ok(mask)
}
