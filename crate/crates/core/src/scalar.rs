//! Scalar abstraction shared by every numerical module.

use nalgebra::RealField;
use num_complex::Complex;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point type the numerical core is generic over (`f32`, `f64`).
pub trait Real:
    RealField
    + Copy
    + Default
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts a literal. Exact for `f64`, rounded for narrower types.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Relative tolerance used by Hermiticity and unitarity checks.
    fn structure_tol() -> Self;
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn structure_tol() -> Self {
        1e-12
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn structure_tol() -> Self {
        1e-5
    }
}

pub type Cplx<T> = Complex<T>;

#[inline]
pub(crate) fn real<T: Real>(re: T) -> Cplx<T> {
    Complex::new(re, T::zero())
}

/// `-i * z`
#[inline]
pub(crate) fn times_neg_i<T: Real>(z: Cplx<T>) -> Cplx<T> {
    Complex::new(z.im, -z.re)
}

#[inline]
pub(crate) fn modulus<T: Real>(z: Cplx<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}
