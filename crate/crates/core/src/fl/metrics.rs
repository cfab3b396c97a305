use serde::Serialize;

use crate::comm::Traffic;
use crate::error::Result;
use crate::nn::{predict, ParamVector};
use crate::data::Dataset;
use crate::scalar::Scalar;

/// One row of the training curve. Round 0 describes the initial model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub lr: f64,
    pub participants: usize,
    pub global_acc: f64,
    pub mean_local_acc: f64,
    pub p10_local_acc: f64,
    pub median_local_acc: f64,
    /// Accuracy on test examples of the classes seen from the start.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seen_acc: Option<f64>,
    /// Accuracy on test examples of the held-out classes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout_acc: Option<f64>,
    pub traffic: Traffic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub global_acc: f64,
    pub local_accs: Vec<f64>,
    pub seen_acc: Option<f64>,
    pub heldout_acc: Option<f64>,
}

impl Evaluation {
    pub fn mean_local(&self) -> f64 {
        if self.local_accs.is_empty() {
            return f64::NAN;
        }
        self.local_accs.iter().sum::<f64>() / self.local_accs.len() as f64
    }

    pub fn local_quantile(&self, q: f64) -> f64 {
        quantile(&self.local_accs, q)
    }
}

/// Linear-interpolated quantile; NaN for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

fn accuracy_on(pred: &[usize], labels: &[usize], idx: impl Iterator<Item = usize>) -> Option<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for i in idx {
        n += 1;
        hit += usize::from(pred[i] == labels[i]);
    }
    (n > 0).then(|| hit as f64 / n as f64)
}

/// Scores `params` on the whole test pool and on each client's test indices
/// (clients with none are skipped). `heldout` splits the pool by class.
pub fn evaluate<T: Scalar>(
    params: &ParamVector<T>,
    test: &Dataset<T>,
    client_tests: &[&[usize]],
    heldout: Option<&[usize]>,
) -> Result<Evaluation> {
    let pred = predict(params, None, test.features())?;
    let labels = test.labels();
    let global_acc = accuracy_on(&pred, labels, 0..labels.len()).unwrap_or(f64::NAN);
    let local_accs = client_tests
        .iter()
        .filter_map(|idx| accuracy_on(&pred, labels, idx.iter().copied()))
        .collect();
    let (seen_acc, heldout_acc) = match heldout {
        None => (None, None),
        Some(h) => (
            accuracy_on(&pred, labels, (0..labels.len()).filter(|&i| !h.contains(&labels[i]))),
            accuracy_on(&pred, labels, (0..labels.len()).filter(|&i| h.contains(&labels[i]))),
        ),
    };
    Ok(Evaluation {
        global_acc,
        local_accs,
        seen_acc,
        heldout_acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [0.4, 0.1, 0.3, 0.2, 0.5];
        assert_eq!(quantile(&v, 0.5), 0.3);
        assert!((quantile(&v, 0.1) - 0.14).abs() < 1e-12);
        assert_eq!(quantile(&v, 0.0), 0.1);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn accuracy_subsets() {
        let pred = [0, 1, 1, 2];
        let labels = [0, 1, 2, 2];
        assert_eq!(accuracy_on(&pred, &labels, 0..4), Some(0.75));
        assert_eq!(accuracy_on(&pred, &labels, [2].into_iter()), Some(0.0));
        assert_eq!(accuracy_on(&pred, &labels, std::iter::empty()), None);
    }
}
