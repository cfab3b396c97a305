use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::data::{ClientShard, Dataset};
use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::scalar::Scalar;
use crate::seed::{rng_from_seed, Rng};

/// Indices of a class-balanced minibatch of size `batch_size` from `shard`.
///
/// Every class present in the shard gets `batch_size / C` slots and a random
/// subset of `batch_size % C` classes gets one more. Within a class, examples
/// are drawn without replacement when the shard holds enough of them and with
/// replacement otherwise.
pub fn balanced_indices<T: Scalar>(
    shard: &ClientShard,
    data: &Dataset<T>,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if shard.indices.is_empty() {
        return Err(Error::Empty("client shard"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.num_classes()];
    for &i in &shard.indices {
        by_class[data.labels()[i]].push(i);
    }
    let present: Vec<&Vec<usize>> = by_class.iter().filter(|v| !v.is_empty()).collect();
    let c = present.len();
    if batch_size < c {
        return Err(Error::invalid(format!(
            "batch size {batch_size} is smaller than the {c} classes present in client {}",
            shard.client_id
        )));
    }
    let mut quota = vec![batch_size / c; c];
    for j in index::sample(rng, c, batch_size % c) {
        quota[j] += 1;
    }
    let mut out = Vec::with_capacity(batch_size);
    for (pool, &need) in present.iter().zip(&quota) {
        if need <= pool.len() {
            out.extend(index::sample(rng, pool.len(), need).into_iter().map(|j| pool[j]));
        } else {
            out.extend((0..need).map(|_| pool[rng.random_range(0..pool.len())]));
        }
    }
    Ok(out)
}

/// Class-balanced minibatch drawn with a dedicated seed.
pub fn sample_balanced_minibatch<T: Scalar>(
    shard: &ClientShard,
    data: &Dataset<T>,
    batch_size: usize,
    seed: u64,
) -> Result<Batch<T>> {
    let idx = balanced_indices(shard, data, batch_size, &mut rng_from_seed(seed))?;
    data.batch(&idx)
}

/// Uniform minibatch sampler without replacement inside an epoch; the shard
/// order is reshuffled whenever it is exhausted.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
}

impl MinibatchSampler {
    pub fn new(shard: &ClientShard, rng: Rng) -> Result<Self> {
        if shard.indices.is_empty() {
            return Err(Error::Empty("client shard"));
        }
        let order = shard.indices.clone();
        // Force a shuffle before the first draw.
        let cursor = order.len();
        Ok(Self { order, cursor, rng })
    }

    pub fn next_indices(&mut self, batch_size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch_size);
        while out.len() < batch_size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            let take = (batch_size - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }

    pub fn next_batch<T: Scalar>(&mut self, data: &Dataset<T>, batch_size: usize) -> Result<Batch<T>> {
        let idx = self.next_indices(batch_size);
        data.batch(&idx)
    }

    pub fn shard_len(&self) -> usize {
        self.order.len()
    }
}

/// Next uniform minibatch from `sampler`, which carries the RNG state.
pub fn sample_minibatch<T: Scalar>(
    sampler: &mut MinibatchSampler,
    data: &Dataset<T>,
    batch_size: usize,
) -> Result<Batch<T>> {
    sampler.next_batch(data, batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    /// Dataset whose labels are given explicitly; features are the index.
    fn labelled(labels: &[usize], classes: usize) -> Dataset<f64> {
        let feats = (0..labels.len()).map(|i| i as f64).collect();
        // Pad with one example per class so Dataset's invariant holds.
        let mut all_labels = labels.to_vec();
        all_labels.extend(0..classes);
        let mut f: Vec<f64> = feats;
        f.extend((0..classes).map(|_| -1.0));
        Dataset::new(Matrix::new(all_labels.len(), 1, f).unwrap(), all_labels, classes).unwrap()
    }

    fn shard(range: std::ops::Range<usize>) -> ClientShard {
        ClientShard {
            client_id: 0,
            indices: range.collect(),
        }
    }

    fn class_counts(d: &Dataset<f64>, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; d.num_classes()];
        for &i in idx {
            c[d.labels()[i]] += 1;
        }
        c
    }

    #[test]
    fn single_class_shard() {
        let d = labelled(&[2; 5], 4);
        let idx = balanced_indices(&shard(0..5), &d, 16, &mut rng_from_seed(1)).unwrap();
        assert_eq!(idx.len(), 16);
        assert!(idx.iter().all(|&i| d.labels()[i] == 2));
    }

    #[test]
    fn four_classes_divide_evenly() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let d = labelled(&labels, 4);
        let idx = balanced_indices(&shard(0..40), &d, 16, &mut rng_from_seed(1)).unwrap();
        assert_eq!(class_counts(&d, &idx), vec![4, 4, 4, 4]);
        // Enough examples per class, so no repeats.
        let mut u = idx.clone();
        u.sort();
        u.dedup();
        assert_eq!(u.len(), 16);
    }

    #[test]
    fn three_classes_give_six_five_five() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let d = labelled(&labels, 5);
        for seed in 0..10 {
            let idx = balanced_indices(&shard(0..30), &d, 16, &mut rng_from_seed(seed)).unwrap();
            let mut counts: Vec<usize> = class_counts(&d, &idx).into_iter().filter(|&c| c > 0).collect();
            counts.sort();
            assert_eq!(counts, vec![5, 5, 6]);
        }
    }

    #[test]
    fn scarce_class_sampled_with_replacement() {
        let d = labelled(&[0, 1, 1, 1, 1, 1, 1, 1, 1, 1], 2);
        let idx = balanced_indices(&shard(0..10), &d, 8, &mut rng_from_seed(3)).unwrap();
        assert_eq!(class_counts(&d, &idx), vec![4, 4]);
    }

    #[test]
    fn rejects_empty_shard_and_small_batch() {
        let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
        let d = labelled(&labels, 3);
        assert!(balanced_indices(&shard(0..0), &d, 4, &mut rng_from_seed(0)).is_err());
        assert!(balanced_indices(&shard(0..9), &d, 2, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn full_batch_is_permutation_of_shard() {
        let s = shard(3..13);
        let mut sampler = MinibatchSampler::new(&s, rng_from_seed(5)).unwrap();
        let mut idx = sampler.next_indices(10);
        idx.sort();
        assert_eq!(idx, s.indices);
    }

    #[test]
    fn epochs_cover_every_index_once() {
        let s = shard(0..12);
        let mut sampler = MinibatchSampler::new(&s, rng_from_seed(5)).unwrap();
        for _ in 0..3 {
            let mut epoch: Vec<usize> = (0..3).flat_map(|_| sampler.next_indices(4)).collect();
            epoch.sort();
            assert_eq!(epoch, s.indices);
        }
    }

    #[test]
    fn same_state_same_sequence() {
        let s = shard(0..20);
        let mut a = MinibatchSampler::new(&s, rng_from_seed(8)).unwrap();
        let mut b = a.clone();
        for _ in 0..7 {
            assert_eq!(a.next_indices(6), b.next_indices(6));
        }
    }
}
