//! Scalar abstraction so the tracking math runs on `f32` or `f64`.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the library: `f32` or `f64`.
///
/// Extends nalgebra's `RealField` with conversions and the IEEE special
/// values that `RealField` does not expose.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Lossy conversion from an `f64` constant.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to scalar")
    }

    /// Lossy widening to `f64`.
    fn as_f64(self) -> f64;

    fn is_finite(self) -> bool;

    fn infinity() -> Self;

    fn neg_infinity() -> Self;
}

impl Real for f32 {
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }

    fn infinity() -> Self {
        f32::INFINITY
    }

    fn neg_infinity() -> Self {
        f32::NEG_INFINITY
    }
}

impl Real for f64 {
    fn as_f64(self) -> f64 {
        self
    }

    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

    fn infinity() -> Self {
        f64::INFINITY
    }

    fn neg_infinity() -> Self {
        f64::NEG_INFINITY
    }
}

/// `ln(Σ exp(x_i))` without overflow; `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let mut max = T::neg_infinity();
    for &v in values {
        if v > max {
            max = v;
        }
    }
    if !max.is_finite() {
        // All -inf (or empty): the sum is zero. +inf inputs are not expected.
        return max;
    }
    let mut acc = T::zero();
    for &v in values {
        acc += (v - max).exp();
    }
    max + acc.ln()
}

/// Two-argument [`log_sum_exp`].
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (T::one() + (lo - hi).exp()).ln()
}
