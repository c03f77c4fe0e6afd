//! Scalar abstraction shared by every solver and functional.
//!
//! All numerics are written against [`Real`], which is implemented for `f32`
//! and `f64`. The tolerances quoted throughout the crate assume `f64`; `f32`
//! is supported for quick exploratory runs.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar usable by the FFT backend and the quadrature code.
pub trait Real:
    Float + FloatConst + FftNum + FromPrimitive + ToPrimitive + Sum + Debug + Display + LowerExp + Default
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("integer representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Relative machine epsilon.
    #[inline]
    fn eps() -> Self {
        <Self as Float>::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;

/// `x^e` for a nonnegative base given as its square, `abs2 = x^2`.
///
/// Integer and half-integer exponents avoid `powf`, which dominates the cost of
/// the nonlinear substep otherwise.
#[inline]
pub fn pow_abs<T: Real>(abs2: T, e: T) -> T {
    let half = e * T::lit(0.5);
    if half == half.round() {
        let k = half.to_i32().unwrap_or(0);
        return abs2.powi(k);
    }
    if e == e.round() {
        // odd integer power: x^(2k+1) = (x^2)^k * x
        let k = ((e - T::one()) * T::lit(0.5)).to_i32().unwrap_or(0);
        return abs2.powi(k) * abs2.sqrt();
    }
    if abs2 <= T::zero() {
        return if e > T::zero() { T::zero() } else { T::infinity() };
    }
    abs2.powf(half)
}

/// Shorthand for `T::lit`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}

#[inline]
pub fn is_finite_c<T: Real>(z: C<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
