use crate::data::{ClientShard, Dataset, MinibatchSampler};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::nn::{loss_and_backward, sgd_step_in_place, ParamVector};
use crate::scalar::Scalar;

/// Hyper-parameters of one local training call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTraining {
    pub steps: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

/// One participant: its data shard, its slice of the test pool and its
/// private minibatch stream.
#[derive(Debug, Clone)]
pub struct Client {
    pub shard: ClientShard,
    pub test_indices: Vec<usize>,
    /// First round in which the client can be selected.
    pub joins_at: usize,
    pub(crate) sampler: MinibatchSampler,
    pub(crate) local_mask: Option<Mask>,
}

impl Client {
    pub fn id(&self) -> usize {
        self.shard.client_id
    }

    pub fn n(&self) -> usize {
        self.shard.n()
    }

    /// The client's own mask (random-local baseline only).
    pub fn local_mask(&self) -> Option<&Mask> {
        self.local_mask.as_ref()
    }

    pub fn train<T: Scalar>(
        &mut self,
        data: &Dataset<T>,
        start: &ParamVector<T>,
        mask: Option<&Mask>,
        opts: &LocalTraining,
    ) -> Result<ParamVector<T>> {
        local_train(&mut self.sampler, data, start, mask, opts)
    }
}

/// `opts.steps` SGD steps from `start` on minibatches drawn from `sampler`.
///
/// With a mask, `start` must already be zero off the mask; gradients and
/// updates are restricted to active coordinates, so the result is too.
pub fn local_train<T: Scalar>(
    sampler: &mut MinibatchSampler,
    data: &Dataset<T>,
    start: &ParamVector<T>,
    mask: Option<&Mask>,
    opts: &LocalTraining,
) -> Result<ParamVector<T>> {
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if let Some(m) = mask {
        Error::check_len("mask", start.len(), m.len())?;
        if let Some(j) = (0..m.len()).find(|&j| !m.is_active(j) && start.values()[j] != T::zero()) {
            return Err(Error::invalid(format!(
                "start model is non-zero at masked coordinate {j}"
            )));
        }
    }
    let lr = T::lit(opts.lr);
    let wd = T::lit(opts.weight_decay);
    let mut params = start.clone();
    for _ in 0..opts.steps {
        let batch = sampler.next_batch(data, opts.batch_size)?;
        let (_, grad) = loss_and_backward(&params, mask, &batch)?;
        sgd_step_in_place(&mut params, &grad, mask, lr, wd)?;
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::{make_synthetic, SyntheticSpec};
    use crate::mask::random_mask;
    use crate::nn::{batch_loss, init_kaiming, LayerLayout};
    use crate::seed::rng_from_seed;

    fn setup() -> (Dataset<f64>, ClientShard, ParamVector<f64>) {
        let data = make_synthetic::<f64>(
            &SyntheticSpec {
                classes: 3,
                features: 6,
                per_class: 30,
                test_per_class: 5,
                spread: 3.0,
            },
            1,
        )
        .unwrap()
        .train;
        let shard = ClientShard {
            client_id: 0,
            indices: (0..data.len()).collect(),
        };
        let layout = Arc::new(LayerLayout::mlp(6, &[8], 3).unwrap());
        (data, shard, init_kaiming(layout, 2))
    }

    fn opts(steps: usize) -> LocalTraining {
        LocalTraining {
            steps,
            lr: 0.1,
            weight_decay: 0.0005,
            batch_size: 16,
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let (data, shard, w) = setup();
        let mut s = MinibatchSampler::new(&shard, rng_from_seed(0)).unwrap();
        assert_eq!(local_train(&mut s, &data, &w, None, &opts(0)).unwrap(), w);
    }

    #[test]
    fn training_lowers_loss() {
        let (data, shard, w) = setup();
        let mut s = MinibatchSampler::new(&shard, rng_from_seed(0)).unwrap();
        let trained = local_train(&mut s, &data, &w, None, &opts(60)).unwrap();
        let full = data.full_batch().unwrap();
        assert!(batch_loss(&trained, None, &full).unwrap() < batch_loss(&w, None, &full).unwrap());
    }

    #[test]
    fn masked_training_stays_on_mask() {
        let (data, shard, w) = setup();
        let m = random_mask(w.layout(), 0.5, 4).unwrap();
        let start = w.masked(&m).unwrap();
        let mut s = MinibatchSampler::new(&shard, rng_from_seed(0)).unwrap();
        let out = local_train(&mut s, &data, &start, Some(&m), &opts(20)).unwrap();
        for (j, v) in out.values().iter().enumerate() {
            if !m.is_active(j) {
                assert_eq!(*v, 0.0);
            }
        }
        assert_ne!(out, start);
    }

    #[test]
    fn rejects_start_off_mask() {
        let (data, shard, w) = setup();
        let m = random_mask(w.layout(), 0.5, 4).unwrap();
        let mut s = MinibatchSampler::new(&shard, rng_from_seed(0)).unwrap();
        assert!(local_train(&mut s, &data, &w, Some(&m), &opts(1)).is_err());
    }

    #[test]
    fn same_stream_same_result() {
        let (data, shard, w) = setup();
        let run = || {
            let mut s = MinibatchSampler::new(&shard, rng_from_seed(7)).unwrap();
            local_train(&mut s, &data, &w, None, &opts(10)).unwrap()
        };
        assert_eq!(run(), run());
    }
}
