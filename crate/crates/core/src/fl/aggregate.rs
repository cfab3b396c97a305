use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::scalar::{weighted_mean, Scalar};

/// Size-weighted FedAvg: `sum_k (n_k / sum_j n_j) w_k`, reduced in input
/// order. Coordinates that are zero in every model stay exactly zero.
pub fn aggregate<T: Scalar>(models: &[ParamVector<T>], sizes: &[usize]) -> Result<ParamVector<T>> {
    let Some(first) = models.first() else {
        return Err(Error::Empty("models to aggregate"));
    };
    Error::check_len("aggregation sizes", models.len(), sizes.len())?;
    for m in models {
        if m.layout() != first.layout() {
            return Err(Error::invalid("models to aggregate have different layouts"));
        }
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("aggregation weight n_k must be positive"));
    }
    let d = first.len();
    let mean = weighted_mean(models.iter().map(|m| m.values()).zip(sizes.iter().copied()), d).expect("non-empty");
    Ok(ParamVector::from_parts_unchecked(first.layout().clone(), mean))
}

/// Sparse uploads `(indices, values, n_k)`: each coordinate becomes the
/// size-weighted mean over the clients that sent it; coordinates nobody sent
/// keep their value in `base`.
pub fn aggregate_sparse<T: Scalar>(base: &ParamVector<T>, uploads: &[(Vec<usize>, Vec<T>, usize)]) -> Result<ParamVector<T>> {
    let mut out = base.clone();
    let mut weight = vec![0usize; base.len()];
    for (idx, vals, n) in uploads {
        Error::check_len("sparse upload values", idx.len(), vals.len())?;
        for (&i, &v) in idx.iter().zip(vals) {
            if i >= base.len() {
                return Err(Error::invalid(format!("sparse upload index {i} out of range")));
            }
            let w = &mut weight[i];
            let slot = &mut out.values_mut()[i];
            if *w == 0 {
                *slot = v;
            } else {
                let ratio = T::lit(*n as f64 / (*w + *n) as f64);
                *slot += ratio * (v - *slot);
            }
            *w += n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::nn::LayerLayout;

    fn vecs(values: &[&[f64]]) -> Vec<ParamVector<f64>> {
        let layout = Arc::new(LayerLayout::mlp(1, &[], values[0].len() / 2).unwrap());
        values
            .iter()
            .map(|v| ParamVector::new(layout.clone(), v.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn single_model_unchanged() {
        let m = vecs(&[&[1.0, -2.0]]);
        assert_eq!(aggregate(&m, &[9]).unwrap(), m[0]);
    }

    #[test]
    fn equal_sizes_give_midpoint() {
        let m = vecs(&[&[1.0, -2.0], &[3.0, 4.0]]);
        assert_eq!(aggregate(&m, &[5, 5]).unwrap().values(), &[2.0, 1.0]);
    }

    #[test]
    fn weighted_example() {
        let m = vecs(&[&[0.0, 0.0], &[4.0, 0.0]]);
        assert_eq!(aggregate(&m, &[1, 3]).unwrap().values()[0], 3.0);
    }

    #[test]
    fn equal_sizes_equal_unit_weights_exactly() {
        let m = vecs(&[&[0.1, 0.7], &[0.3, -0.9], &[1.0 / 3.0, 2.5]]);
        assert_eq!(aggregate(&m, &[6, 6, 6]).unwrap(), aggregate(&m, &[1, 1, 1]).unwrap());
        let naive: Vec<f64> = (0..2).map(|j| m.iter().map(|v| v.values()[j]).sum::<f64>() / 3.0).collect();
        for (a, b) in aggregate(&m, &[1, 1, 1]).unwrap().values().iter().zip(naive) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn common_zeros_survive() {
        let m = vecs(&[&[0.0, 1.0], &[0.0, 2.0], &[0.0, 5.0]]);
        assert_eq!(aggregate(&m, &[2, 7, 1]).unwrap().values()[0], 0.0);
    }

    #[test]
    fn rejects_empty() {
        assert!(aggregate::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn sparse_uploads_average_over_senders() {
        let base = vecs(&[&[9.0, 9.0, 9.0, 9.0]]).remove(0);
        let uploads = vec![(vec![0, 1], vec![1.0, 2.0], 1), (vec![1, 2], vec![6.0, 3.0], 3)];
        let out = aggregate_sparse(&base, &uploads).unwrap();
        assert_eq!(out.values(), &[1.0, 5.0, 3.0, 9.0]);
    }
}
