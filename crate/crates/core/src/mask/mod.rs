//! Saliency scoring, mask construction and mask analysis.

mod bits;
mod saliency;
mod select;
mod stats;

pub use bits::{read_mask, write_mask, Mask, MaskSidecar};
pub use saliency::{
    aggregate_saliency, full_data_saliency, full_data_saliency_ordered, local_saliency, oracle_mask, SaliencyVector,
};
pub use select::{active_count, mask_error, random_mask, shuffle_within_layers, topk_indices, topk_mask};
pub use stats::{layer_densities, LayerDensity, MaskStats};
