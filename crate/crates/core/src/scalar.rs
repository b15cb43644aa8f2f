//! Scalar abstraction shared by every numeric kernel in the crate.

use nalgebra as na;
use num_traits as nt;

/// Floating point type the feature, training and policy kernels are generic over.
///
/// Implemented for `f32` and `f64`. Elementary functions come from nalgebra's
/// `RealField`, which also backs the dense solves.
pub trait Scalar:
    nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + na::RealField
    + Copy
    + Default
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Guard used by the margin and ratio features.
    const EPS_GUARD: Self;
    const INFINITY: Self;
    const NEG_INFINITY: Self;
    const MACHINE_EPSILON: Self;

    /// Lossy conversion from an `f64` literal or wire value.
    fn lit(v: f64) -> Self;

    fn from_count(n: usize) -> Self {
        <Self as nt::FromPrimitive>::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const EPS_GUARD: Self = 1e-12;
    const INFINITY: Self = f32::INFINITY;
    const NEG_INFINITY: Self = f32::NEG_INFINITY;
    const MACHINE_EPSILON: Self = f32::EPSILON;

    fn lit(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    const EPS_GUARD: Self = 1e-12;
    const INFINITY: Self = f64::INFINITY;
    const NEG_INFINITY: Self = f64::NEG_INFINITY;
    const MACHINE_EPSILON: Self = f64::EPSILON;

    fn lit(v: f64) -> Self {
        v
    }
}

/// Sum with Neumaier compensation.
pub fn compensated_sum<T: Scalar, I: IntoIterator<Item = T>>(values: I) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}
