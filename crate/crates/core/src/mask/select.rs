use std::cmp::Ordering;

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::mask::{Mask, SaliencyVector};
use crate::nn::LayerLayout;
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// `k = floor((1 - sigma) * d)`.
///
/// A product that lands within rounding noise of an integer is taken as that
/// integer, so `sigma = 0.9, d = 100` yields 10 rather than 9.
pub fn active_count(d: usize, sigma: f64) -> Result<usize> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::invalid(format!("sparsity must lie in (0, 1), got {sigma}")));
    }
    let exact = (1.0 - sigma) * d as f64;
    let nearest = exact.round();
    let k = if (exact - nearest).abs() <= 1e-9 * (d.max(1) as f64) {
        nearest
    } else {
        exact.floor()
    };
    let k = k as usize;
    if k == 0 {
        return Err(Error::invalid(format!(
            "sparsity {sigma} leaves no active parameters out of {d}"
        )));
    }
    Ok(k.min(d))
}

/// Indices of the `k` largest scores, ties going to the lower index.
/// The result is sorted ascending.
pub fn topk_indices<T: Scalar>(scores: &[T], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    if k == 0 {
        return Vec::new();
    }
    let rank = |&a: &usize, &b: &usize| -> Ordering {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, rank);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Mask keeping the `floor((1 - sigma) d)` most salient coordinates.
pub fn topk_mask<T: Scalar>(scores: &SaliencyVector<T>, sigma: f64, layout: &LayerLayout) -> Result<Mask> {
    let d = layout.total_params();
    Error::check_len("saliency vector", d, scores.len())?;
    let k = active_count(d, sigma)?;
    Mask::from_active_indices(d, topk_indices(scores.values(), k))
}

/// `k` coordinates drawn uniformly without replacement over all of `[0, d)`.
pub fn random_mask(layout: &LayerLayout, sigma: f64, seed: u64) -> Result<Mask> {
    let d = layout.total_params();
    let k = active_count(d, sigma)?;
    let mut rng = rng_from_seed(seed);
    Mask::from_active_indices(d, index::sample(&mut rng, d, k))
}

/// Uniformly permutes the bits inside every layer slice, keeping each layer's
/// active count.
pub fn shuffle_within_layers(mask: &Mask, layout: &LayerLayout, seed: u64) -> Result<Mask> {
    Error::check_len("mask", layout.total_params(), mask.len())?;
    let mut rng = rng_from_seed(seed);
    let mut bits = mask.bits().to_vec();
    for slice in layout.layers() {
        bits[slice.range()].shuffle(&mut rng);
    }
    Ok(Mask::from_bits(bits))
}

/// `1 - |active(m) ∩ active(reference)| / k`.
pub fn mask_error(mask: &Mask, reference: &Mask) -> Result<f64> {
    if mask.count() != reference.count() {
        return Err(Error::invalid(format!(
            "mask error needs equal active counts, got {} and {}",
            mask.count(),
            reference.count()
        )));
    }
    if mask.count() == 0 {
        return Err(Error::Empty("mask"));
    }
    let overlap = mask.overlap(reference)?;
    Ok(1.0 - overlap as f64 / mask.count() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    fn flat(d: usize) -> LayerLayout {
        // 1 -> d/2 dense layer: d/2 weights plus d/2 biases.
        let l = LayerLayout::mlp(1, &[], d / 2).unwrap();
        assert_eq!(l.total_params(), d);
        l
    }

    fn sal(v: &[f64]) -> SaliencyVector<f64> {
        SaliencyVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn topk_picks_largest() {
        let m = topk_mask(&sal(&[0.1, 0.4, 0.2, 0.3]), 0.5, &flat(4)).unwrap();
        assert_eq!(m.bits(), &[false, true, false, true]);
    }

    #[test]
    fn topk_ties_go_to_lower_index() {
        let m = topk_mask(&sal(&[1.0; 4]), 0.5, &flat(4)).unwrap();
        assert_eq!(m.bits(), &[true, true, false, false]);
    }

    #[test]
    fn topk_count_is_exact() {
        let layout = flat(100);
        let s: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        assert_eq!(topk_mask(&sal(&s), 0.5, &layout).unwrap().count(), 50);
    }

    #[test]
    fn topk_matches_full_sort() {
        let s: Vec<f64> = (0..57).map(|i| ((i * 7919) % 13) as f64 * 0.5).collect();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        let mut want = order[..20].to_vec();
        want.sort();
        assert_eq!(topk_indices(&s, 20), want);
    }

    #[test]
    fn active_count_handles_decimal_sparsities() {
        // Oracle in integer arithmetic: sigma = pct / 100.
        for d in [1_usize, 7, 10, 99, 100, 1000, 6922, 12345] {
            for pct in [50_usize, 70, 80, 90, 95] {
                let want = (100 - pct) * d / 100;
                let got = active_count(d, pct as f64 / 100.0);
                if want == 0 {
                    assert!(got.is_err());
                } else {
                    assert_eq!(got.unwrap(), want, "d={d} pct={pct}");
                }
            }
        }
        assert!(active_count(10, 0.0).is_err());
        assert!(active_count(10, 1.0).is_err());
    }

    #[test]
    fn mask_error_values() {
        let a = Mask::from_active_indices(8, [0, 1, 2, 3]).unwrap();
        let b = Mask::from_active_indices(8, [4, 5, 6, 7]).unwrap();
        let c = Mask::from_active_indices(8, [0, 1, 2, 7]).unwrap();
        assert_eq!(mask_error(&a, &a).unwrap(), 0.0);
        assert_eq!(mask_error(&a, &b).unwrap(), 1.0);
        assert_eq!(mask_error(&a, &c).unwrap(), 0.25);
        let short = Mask::from_active_indices(8, [0]).unwrap();
        assert!(mask_error(&a, &short).is_err());
    }

    #[test]
    fn shuffle_keeps_full_layers_and_counts() {
        let layout = LayerLayout::mlp(4, &[3], 2).unwrap();
        let d = layout.total_params();
        let mut bits = vec![false; d];
        for i in layout.layers()[0].range() {
            bits[i] = true;
        }
        bits[layout.layers()[2].offset] = true;
        let mask = Mask::from_bits(bits);
        let shuffled = shuffle_within_layers(&mask, &layout, 4).unwrap();
        let r0 = layout.layers()[0].range();
        assert!(shuffled.bits()[r0].iter().all(|&b| b));
        for s in layout.layers() {
            let before = mask.bits()[s.range()].iter().filter(|&&b| b).count();
            let after = shuffled.bits()[s.range()].iter().filter(|&&b| b).count();
            assert_eq!(before, after, "{}", s.name);
        }
    }

    #[test]
    fn shuffle_matches_reference_permutation() {
        // One 6-bit slice.
        use crate::nn::{LayerSlice, ParamKind};
        let layout = LayerLayout::new(vec![LayerSlice {
            name: "w".into(),
            offset: 0,
            len: 6,
            fan_in: 2,
            fan_out: 3,
            kind: ParamKind::Weight,
        }])
        .unwrap();
        let mask = Mask::from_active_indices(6, [1, 4]).unwrap();
        let seed = 2024;
        let got = shuffle_within_layers(&mask, &layout, seed).unwrap();

        // Reference: shuffle the position labels with the same stream and read
        // the bits through that permutation.
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng_from_seed(seed));
        let want: Vec<bool> = perm.iter().map(|&p| mask.bits()[p]).collect();
        assert_eq!(got.bits(), &want[..]);
        assert_eq!(got.count(), 2);
    }

    #[test]
    fn random_mask_count_and_seed_dependence() {
        let layout = flat(1000);
        let a = random_mask(&layout, 0.5, 1).unwrap();
        let b = random_mask(&layout, 0.5, 2).unwrap();
        assert_eq!(a.count(), 500);
        assert_ne!(a, b);
        assert_eq!(a, random_mask(&layout, 0.5, 1).unwrap());
    }

    #[test]
    fn random_mask_layer_density_tracks_global() {
        let layout = LayerLayout::mlp(16, &[12], 5).unwrap();
        let sigma = 0.7;
        let seeds = 200;
        for slice in layout.layers() {
            let mut total = 0.0;
            for seed in 0..seeds {
                let m = random_mask(&layout, sigma, seed).unwrap();
                let on = m.bits()[slice.range()].iter().filter(|&&b| b).count();
                total += on as f64 / slice.len as f64;
            }
            let mean = total / seeds as f64;
            assert!((mean - 0.3).abs() <= 0.03, "{} mean density {mean}", slice.name);
        }
    }

    proptest! {
        #[test]
        fn topk_invariant_under_positive_scaling(
            v in proptest::collection::vec(0.0f64..10.0, 4..64),
            c in 0.01f64..100.0,
        ) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let k = v.len() / 2;
            // Scaling can merge nearly-equal values through rounding, so only
            // compare when the original scores are distinct.
            let mut sorted = v.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
            prop_assert_eq!(topk_indices(&v, k), topk_indices(&scaled, k));
        }

        #[test]
        fn shuffle_preserves_layer_counts(seed in any::<u64>(), keep in proptest::collection::vec(any::<bool>(), 27)) {
            let layout = LayerLayout::mlp(3, &[4], 3).unwrap();
            prop_assert_eq!(layout.total_params(), 31);
            let mut bits = keep.clone();
            bits.extend([true, false, true, false]);
            let mask = Mask::from_bits(bits);
            let out = shuffle_within_layers(&mask, &layout, seed).unwrap();
            for s in layout.layers() {
                let a = mask.bits()[s.range()].iter().filter(|&&b| b).count();
                let b = out.bits()[s.range()].iter().filter(|&&b| b).count();
                prop_assert_eq!(a, b);
            }
        }
    }
}
