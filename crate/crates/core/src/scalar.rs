//! Scalar abstraction shared by every numeric kernel in the crate.

use std::fmt::{Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst};
use rustfft::FftNum;

/// Floating-point scalar the solvers, integrators and surrogates are generic over.
///
/// Implemented for `f32` and `f64`. Persistence is always 64-bit, so values are
/// widened on write and narrowed on read.
pub trait Real:
    Float + FloatConst + FftNum + Default + Display + LowerExp + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal or configuration value into this scalar.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("real scalar converts to f64")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Euclidean norm of a slice.
pub fn l2_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// `‖a − b‖₂`.
pub fn l2_distance<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// Maximum absolute entry, NaN-propagating.
pub fn max_abs<T: Real>(v: &[T]) -> T {
    let mut m = T::zero();
    for &x in v {
        if x.is_nan() {
            return x;
        }
        m = m.max(x.abs());
    }
    m
}
