use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::nn::{LayerLayout, ParamKind, ParamVector};
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// Kaiming (He) normal initialization: weights ~ N(0, 2 / fan_in), biases zero.
///
/// Draws are made in `f64` in layout order, so the result depends only on
/// `(layout, seed)`.
pub fn init_kaiming<T: Scalar>(layout: Arc<LayerLayout>, seed: u64) -> ParamVector<T> {
    let mut rng = rng_from_seed(seed);
    let mut values = vec![T::zero(); layout.total_params()];
    for slice in layout.layers() {
        if slice.kind == ParamKind::Bias {
            continue;
        }
        let std = (2.0 / slice.fan_in as f64).sqrt();
        for v in &mut values[slice.range()] {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = T::lit(z * std);
        }
    }
    ParamVector::from_parts_unchecked(layout, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biases_start_at_zero() {
        let layout = Arc::new(LayerLayout::mlp(5, &[7, 3], 4).unwrap());
        let p = init_kaiming::<f64>(layout.clone(), 11);
        for s in layout.layers().iter().filter(|s| s.kind == ParamKind::Bias) {
            assert!(p.values()[s.range()].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn weight_variance_matches_fan_in() {
        // fan_in = 64, fan_out sized so the slice holds 10_048 samples.
        let layout = Arc::new(LayerLayout::mlp(64, &[], 157).unwrap());
        let p = init_kaiming::<f64>(layout.clone(), 5);
        let w = &p.values()[layout.layers()[0].range()];
        assert!(w.len() >= 10_000);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 2.0 / 64.0;
        assert!((var - target).abs() <= 0.1 * target, "var {var} target {target}");
    }

    #[test]
    fn deterministic_per_seed() {
        let layout = Arc::new(LayerLayout::mlp(6, &[5], 3).unwrap());
        let a = init_kaiming::<f64>(layout.clone(), 99);
        let b = init_kaiming::<f64>(layout.clone(), 99);
        let c = init_kaiming::<f64>(layout, 100);
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn f32_is_rounded_f64() {
        let layout = Arc::new(LayerLayout::mlp(4, &[4], 2).unwrap());
        let a = init_kaiming::<f64>(layout.clone(), 1);
        let b = init_kaiming::<f32>(layout, 1);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(*x as f32, *y);
        }
    }
}
