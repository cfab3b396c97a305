use rayon::prelude::*;

use crate::data::{sample_balanced_minibatch, ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::mask::{aggregate_saliency, local_saliency, topk_mask, Mask, SaliencyVector};
use crate::nn::ParamVector;
use crate::scalar::Scalar;
use crate::seed::SeedTree;

/// Result of a saliency round: the aggregated scores and the mask cut from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Discovery<T> {
    pub saliency: SaliencyVector<T>,
    pub mask: Mask,
}

/// Each client scores `params` on one class-balanced minibatch (seeded by
/// `seeds` and its id); the server weights the scores by shard size and keeps
/// the top `(1 - sigma)` fraction.
pub fn discover_mask<T: Scalar>(
    params: &ParamVector<T>,
    shards: &[&ClientShard],
    data: &Dataset<T>,
    sigma: f64,
    batch_size: usize,
    seeds: &SeedTree,
) -> Result<Discovery<T>> {
    if shards.is_empty() {
        return Err(Error::Empty("clients for mask discovery"));
    }
    let scored: Vec<(SaliencyVector<T>, usize)> = shards
        .par_iter()
        .map(|shard| {
            let seed = seeds.indexed_seed("client", shard.client_id as u64);
            let batch = sample_balanced_minibatch(shard, data, batch_size, seed)?;
            Ok((local_saliency(params, &batch)?, shard.n()))
        })
        .collect::<Result<_>>()?;
    let saliency = aggregate_saliency(&scored)?;
    let mask = topk_mask(&saliency, sigma, params.layout())?;
    Ok(Discovery { saliency, mask })
}
