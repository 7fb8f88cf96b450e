//! Scalar abstraction shared by the value types.
//!
//! The measurement types are generic over the real scalar so that they can be
//! built and inspected in `f32` or `f64`. Everything that goes through the
//! conic backend runs in `f64`.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable for effects and states: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Entrywise tolerance for the Hermiticity check.
    fn hermitian_tol() -> Self;
    /// Slack allowed on minimum eigenvalues and on POVM completeness.
    fn psd_tol() -> Self;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal fits the scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f64 {
    fn hermitian_tol() -> Self {
        1e-12
    }
    fn psd_tol() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn hermitian_tol() -> Self {
        1e-5
    }
    fn psd_tol() -> Self {
        1e-5
    }
}

pub(crate) fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

pub(crate) fn cr<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}
