use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::nn::LayerLayout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDensity {
    pub name: String,
    pub active: usize,
    pub total: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub layers: Vec<LayerDensity>,
    pub active: usize,
    pub total: usize,
    pub density: f64,
}

/// Per-layer active counts and densities of `mask`.
pub fn layer_densities(mask: &Mask, layout: &LayerLayout) -> Result<MaskStats> {
    Error::check_len("mask", layout.total_params(), mask.len())?;
    let layers = layout
        .layers()
        .iter()
        .map(|s| {
            let active = mask.bits()[s.range()].iter().filter(|&&b| b).count();
            LayerDensity {
                name: s.name.clone(),
                active,
                total: s.len,
                density: active as f64 / s.len as f64,
            }
        })
        .collect();
    Ok(MaskStats {
        layers,
        active: mask.count(),
        total: mask.len(),
        density: mask.density(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ones_is_dense_everywhere() {
        let layout = LayerLayout::mlp(3, &[2], 2).unwrap();
        let stats = layer_densities(&Mask::ones(layout.total_params()), &layout).unwrap();
        assert!(stats.layers.iter().all(|l| l.density == 1.0));
        assert_eq!(stats.density, 1.0);
    }

    #[test]
    fn hand_counted_two_layer_mask() {
        // 2 -> 2 -> 1: fc0.weight [0,4), fc0.bias [4,6), fc1.weight [6,8), fc1.bias [8,9).
        let layout = LayerLayout::mlp(2, &[2], 1).unwrap();
        let mask = Mask::from_active_indices(9, [0, 2, 3, 7]).unwrap();
        let stats = layer_densities(&mask, &layout).unwrap();
        let counts: Vec<usize> = stats.layers.iter().map(|l| l.active).collect();
        assert_eq!(counts, vec![3, 0, 1, 0]);
        assert_eq!(stats.layers[1].density, 0.0);
        assert_eq!(stats.layers[0].density, 0.75);
        assert_eq!(counts.iter().sum::<usize>(), stats.active);
    }
}
