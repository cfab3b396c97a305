//! Connection saliency `|dL/dw_j * w_j|` and its data-weighted aggregation.
//!
//! The score is the magnitude of the derivative of the loss with respect to a
//! multiplicative gate `c_j` on each weight, evaluated at `c = 1`; by the
//! chain rule that is the gradient times the weight, so one backward pass
//! scores every coordinate.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mask::{topk_mask, Mask};
use crate::nn::{backward, Batch, LayerLayout, ParamVector};
use crate::scalar::{weighted_mean, Scalar};

/// Non-negative per-coordinate importance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> SaliencyVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= T::zero())) {
            return Err(Error::invalid(format!("saliency {i} is negative or not finite")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn from_gradient(params: &[T], grad: &[T]) -> Self {
        let values = grad.iter().zip(params).map(|(&g, &w)| (g * w).abs()).collect();
        Self { values }
    }
}

/// Saliency of every parameter on one batch. Parameters are not modified.
pub fn local_saliency<T: Scalar>(params: &ParamVector<T>, batch: &Batch<T>) -> Result<SaliencyVector<T>> {
    let grad = backward(params, None, batch)?;
    Ok(SaliencyVector::from_gradient(params.values(), grad.values()))
}

/// `s = sum_k p_k s_k` with `p_k = n_k / sum_i n_i`, reduced in input order.
pub fn aggregate_saliency<T: Scalar>(pairs: &[(SaliencyVector<T>, usize)]) -> Result<SaliencyVector<T>> {
    let Some((first, _)) = pairs.first() else {
        return Err(Error::Empty("saliency contributions"));
    };
    let d = first.len();
    for (s, n) in pairs {
        Error::check_len("saliency vector", d, s.len())?;
        if *n == 0 {
            return Err(Error::invalid("every contributing client needs n_k >= 1"));
        }
    }
    let mean = weighted_mean(pairs.iter().map(|(s, n)| (s.values(), *n)), d).expect("non-empty");
    Ok(SaliencyVector { values: mean })
}

/// Saliency of the mean loss over the whole dataset.
///
/// With `chunk = Some(c)` the gradient is accumulated over consecutive chunks
/// of `c` examples weighted by chunk size, which equals the one-batch result
/// up to rounding.
pub fn full_data_saliency<T: Scalar>(
    params: &ParamVector<T>,
    data: &Dataset<T>,
    chunk: Option<usize>,
) -> Result<SaliencyVector<T>> {
    let order: Vec<usize> = (0..data.len()).collect();
    full_data_saliency_ordered(params, data, &order, chunk.unwrap_or(data.len()))
}

/// As [`full_data_saliency`] but visiting the examples in `order`.
pub fn full_data_saliency_ordered<T: Scalar>(
    params: &ParamVector<T>,
    data: &Dataset<T>,
    order: &[usize],
    chunk: usize,
) -> Result<SaliencyVector<T>> {
    if order.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let chunk = chunk.max(1);
    let total = T::lit(order.len() as f64);
    let mut grad = vec![T::zero(); params.len()];
    for part in order.chunks(chunk) {
        let g = backward(params, None, &data.batch(part)?)?;
        let w = T::lit(part.len() as f64) / total;
        for (acc, &v) in grad.iter_mut().zip(g.values()) {
            *acc += w * v;
        }
    }
    Ok(SaliencyVector::from_gradient(params.values(), &grad))
}

/// Reference mask: top-k of the saliency over the entire training set.
pub fn oracle_mask<T: Scalar>(
    params: &ParamVector<T>,
    data: &Dataset<T>,
    sigma: f64,
    layout: &LayerLayout,
) -> Result<Mask> {
    let s = full_data_saliency(params, data, None)?;
    topk_mask(&s, sigma, layout)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::{make_synthetic, SyntheticSpec};
    use crate::nn::{batch_loss, init_kaiming, Matrix};

    fn setup() -> (ParamVector<f64>, Batch<f64>) {
        let layout = Arc::new(LayerLayout::mlp(3, &[5], 3).unwrap());
        let mut p = init_kaiming::<f64>(layout.clone(), 12);
        // Exact zeros in a few coordinates.
        p.values_mut()[0] = 0.0;
        p.values_mut()[7] = 0.0;
        let feats = vec![0.5, -1.0, 2.0, 1.5, 0.3, -0.2, -0.7, 0.8, 0.1];
        let batch = Batch::new(Matrix::new(3, 3, feats).unwrap(), vec![0, 2, 1], 3).unwrap();
        (p, batch)
    }

    #[test]
    fn zero_weight_has_zero_saliency() {
        let (p, b) = setup();
        let s = local_saliency(&p, &b).unwrap();
        assert_eq!(s.values()[0], 0.0);
        assert_eq!(s.values()[7], 0.0);
    }

    #[test]
    fn equals_abs_gradient_times_weight() {
        let (p, b) = setup();
        let s = local_saliency(&p, &b).unwrap();
        let g = backward(&p, None, &b).unwrap();
        for ((&sv, &gv), &w) in s.values().iter().zip(g.values()).zip(p.values()) {
            assert_eq!(sv, (gv * w).abs());
        }
    }

    #[test]
    fn matches_gate_finite_difference() {
        let (p, b) = setup();
        let s = local_saliency(&p, &b).unwrap();
        let h = 1e-5;
        for j in 0..p.len() {
            let gated = |c: f64| {
                let mut q = p.clone();
                q.values_mut()[j] *= c;
                batch_loss(&q, None, &b).unwrap()
            };
            let fd = ((gated(1.0 + h) - gated(1.0 - h)) / (2.0 * h)).abs();
            let err = (fd - s.values()[j]).abs() / fd.abs().max(s.values()[j]).max(1e-7);
            assert!(err <= 1e-4, "coord {j}: fd {fd} vs {}", s.values()[j]);
        }
    }

    #[test]
    fn duplicated_batch_gives_same_scores() {
        let (p, b) = setup();
        let doubled_feats = [b.features().as_slice(), b.features().as_slice()].concat();
        let doubled_labels = [b.labels(), b.labels()].concat();
        let b2 = Batch::new(Matrix::new(6, 3, doubled_feats).unwrap(), doubled_labels, 3).unwrap();
        let s1 = local_saliency(&p, &b).unwrap();
        let s2 = local_saliency(&p, &b2).unwrap();
        for (a, c) in s1.values().iter().zip(s2.values()) {
            assert!((a - c).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn aggregation_examples() {
        let s1 = SaliencyVector::new(vec![1.0, 2.0]).unwrap();
        let s2 = SaliencyVector::new(vec![3.0, 0.0]).unwrap();
        let agg = aggregate_saliency(&[(s1.clone(), 1), (s2.clone(), 3)]).unwrap();
        assert_eq!(agg.values(), &[2.5, 0.5]);
        assert_eq!(aggregate_saliency(&[(s1.clone(), 7)]).unwrap(), s1);
        let eq = aggregate_saliency(&[(s1.clone(), 4), (s2.clone(), 4)]).unwrap();
        assert_eq!(eq.values(), &[2.0, 1.0]);
    }

    #[test]
    fn aggregation_of_identical_vectors_is_exact() {
        let s = SaliencyVector::new(vec![0.1, 0.7, 1.0 / 3.0, 2e-9]).unwrap();
        let pairs: Vec<_> = [3, 5, 11, 2].iter().map(|&n| (s.clone(), n)).collect();
        assert_eq!(aggregate_saliency(&pairs).unwrap(), s);
    }

    #[test]
    fn aggregation_rejects_bad_input() {
        let a = SaliencyVector::new(vec![1.0, 2.0]).unwrap();
        let b = SaliencyVector::new(vec![1.0]).unwrap();
        assert!(aggregate_saliency(&[(a.clone(), 1), (b, 1)]).is_err());
        assert!(aggregate_saliency(&[(a, 0)]).is_err());
        assert!(aggregate_saliency::<f64>(&[]).is_err());
        assert!(SaliencyVector::new(vec![-1.0]).is_err());
    }

    #[test]
    fn oracle_is_order_and_chunk_independent() {
        let layout = Arc::new(LayerLayout::mlp(4, &[3], 3).unwrap());
        assert!(layout.total_params() <= 40);
        let data = make_synthetic::<f64>(
            &SyntheticSpec {
                classes: 3,
                features: 4,
                per_class: 14,
                test_per_class: 1,
                spread: 2.0,
            },
            5,
        )
        .unwrap()
        .train;
        let p = init_kaiming::<f64>(layout.clone(), 3);
        let oracle = oracle_mask(&p, &data, 0.5, &layout).unwrap();
        let one_shot = topk_mask(&local_saliency(&p, &data.full_batch().unwrap()).unwrap(), 0.5, &layout).unwrap();
        assert_eq!(oracle, one_shot);

        let mut order: Vec<usize> = (0..data.len()).rev().collect();
        order.rotate_left(5);
        let permuted = full_data_saliency_ordered(&p, &data, &order, 8).unwrap();
        assert_eq!(topk_mask(&permuted, 0.5, &layout).unwrap(), oracle);
    }
}
