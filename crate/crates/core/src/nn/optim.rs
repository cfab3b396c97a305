use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::nn::{Gradient, ParamVector};
use crate::scalar::Scalar;

/// Exponentially decaying per-round learning rate, `lr0 * decay^round`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            lr0: 0.1,
            decay: 0.998,
        }
    }
}

impl LrSchedule {
    pub fn at_round(&self, round: usize) -> f64 {
        self.lr0 * self.decay.powi(round as i32)
    }
}

/// Learning rate used in round `round` under the default schedule.
pub fn lr_at_round(round: usize) -> f64 {
    LrSchedule::default().at_round(round)
}

/// One SGD step with L2 weight decay. Coordinates outside `mask` are left
/// untouched.
pub fn sgd_step<T: Scalar>(
    params: &ParamVector<T>,
    grad: &Gradient<T>,
    mask: Option<&Mask>,
    lr: T,
    weight_decay: T,
) -> Result<ParamVector<T>> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grad, mask, lr, weight_decay)?;
    Ok(next)
}

pub fn sgd_step_in_place<T: Scalar>(
    params: &mut ParamVector<T>,
    grad: &Gradient<T>,
    mask: Option<&Mask>,
    lr: T,
    weight_decay: T,
) -> Result<()> {
    Error::check_len("gradient", params.len(), grad.len())?;
    if lr < T::zero() || weight_decay < T::zero() {
        return Err(Error::invalid("learning rate and weight decay must be non-negative"));
    }
    let values = params.values_mut();
    match mask {
        None => {
            for (w, &g) in values.iter_mut().zip(grad.values()) {
                *w -= lr * (g + weight_decay * *w);
            }
        }
        Some(m) => {
            Error::check_len("mask", values.len(), m.len())?;
            for ((w, &g), &on) in values.iter_mut().zip(grad.values()).zip(m.bits()) {
                if on {
                    *w -= lr * (g + weight_decay * *w);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::nn::LayerLayout;

    fn single(w: f64, g: f64) -> (ParamVector<f64>, Gradient<f64>) {
        // 1 -> 1 network without hidden layers: weight then bias.
        let layout = Arc::new(LayerLayout::mlp(1, &[], 1).unwrap());
        let p = ParamVector::new(layout.clone(), vec![w, 0.0]).unwrap();
        let grad = Gradient::from_parts_unchecked(layout, vec![g, 0.0]);
        (p, grad)
    }

    #[test]
    fn zero_rate_is_identity() {
        let (p, g) = single(1.5, -3.0);
        assert_eq!(sgd_step(&p, &g, None, 0.0, 0.0).unwrap(), p);
    }

    #[test]
    fn plain_step_value() {
        let (p, g) = single(1.0, 2.0);
        let next = sgd_step(&p, &g, None, 0.1, 0.0).unwrap();
        assert!((next.values()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_enters_update() {
        let (p, g) = single(2.0, 1.0);
        let next = sgd_step(&p, &g, None, 0.1, 0.5).unwrap();
        // 2 - 0.1 * (1 + 0.5 * 2)
        assert!((next.values()[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn masked_coordinate_is_frozen() {
        let (p, g) = single(1.0, 2.0);
        let m = Mask::from_bits(vec![false, true]);
        let next = sgd_step(&p, &g, Some(&m), 0.1, 0.0005).unwrap();
        assert_eq!(next.values()[0], 1.0);
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lr_at_round(0), 0.1);
        assert!((lr_at_round(1) - 0.0998).abs() < 1e-15);
        let r500 = lr_at_round(500);
        assert!((r500 - 0.036_75).abs() < 5e-5, "{r500}");
    }
}
