//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! The network, saliency and aggregation code is written once against
//! [`Scalar`] and instantiated for `f32` and `f64`. Random draws are always
//! taken in `f64` and narrowed afterwards, so an `f32` run and an `f64` run
//! with the same seed start from the same (rounded) initial state.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Short name used in config echoes and file sidecars.
    const NAME: &'static str;

    /// Converts an `f64` constant, rounding to the nearest representable value.
    fn lit(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn lit(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn lit(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// `acc[i] += alpha * x[i]`.
#[inline]
pub(crate) fn axpy<T: Scalar>(acc: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Running size-weighted mean over `items`, accumulated in the given order.
///
/// Uses the incremental update `m += (w_j / W_j) * (x_j - m)`, so averaging
/// identical inputs returns them bit-for-bit and coordinates that are zero in
/// every input stay exactly zero.
pub(crate) fn weighted_mean<'a, T, I>(items: I, len: usize) -> Option<Vec<T>>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a [T], usize)>,
{
    let mut acc: Option<Vec<T>> = None;
    let mut total = 0usize;
    for (values, weight) in items {
        debug_assert_eq!(values.len(), len);
        total += weight;
        match acc.as_mut() {
            None => acc = Some(values.to_vec()),
            Some(mean) => {
                let ratio = T::lit(weight as f64 / total as f64);
                for (m, &x) in mean.iter_mut().zip(values) {
                    *m += ratio * (x - *m);
                }
            }
        }
    }
    acc
}
