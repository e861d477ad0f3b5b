//! Scalar abstractions: real field types (`f32`, `f64`) and the complex
//! extension used by the time-harmonic systems.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive, Zero};

/// Real floating-point type the mesh, materials and element matrices live in.
pub trait Real:
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
    + Scalar<Real = Self>
{
    /// Converts an `f64` literal. Never fails for the supported types.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Field element a linear solver can work in: a real type or its complex extension.
pub trait Scalar:
    Copy + NumAssign + Neg<Output = Self> + Sum + Debug + Default + Send + Sync + 'static
{
    type Real: Real;

    fn from_real(r: Self::Real) -> Self;

    /// Modulus (absolute value for reals).
    fn modulus(self) -> Self::Real;

    fn conj(self) -> Self;
}

impl Scalar for f32 {
    type Real = f32;
    fn from_real(r: f32) -> Self {
        r
    }
    fn modulus(self) -> f32 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
}

impl Scalar for f64 {
    type Real = f64;
    fn from_real(r: f64) -> Self {
        r
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
}

impl<T: Real> Scalar for Complex<T> {
    type Real = T;
    fn from_real(r: T) -> Self {
        Complex::new(r, T::zero())
    }
    fn modulus(self) -> T {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex::conj(&self)
    }
}

/// Maximum modulus of a slice, zero for an empty slice.
pub fn norm_inf<S: Scalar>(v: &[S]) -> S::Real {
    v.iter().fold(S::Real::zero(), |m, x| m.max(x.modulus()))
}

/// `‖a − b‖∞`.
pub fn abs_diff_inf<S: Scalar>(a: &[S], b: &[S]) -> S::Real {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .fold(S::Real::zero(), |m, (x, y)| m.max((*x - *y).modulus()))
}

/// `‖a − b‖∞ / ‖b‖∞`, falling back to the absolute difference when `b` vanishes.
pub fn rel_diff_inf<S: Scalar>(a: &[S], b: &[S]) -> S::Real {
    let diff = abs_diff_inf(a, b);
    let denom = norm_inf(b);
    if denom > S::Real::zero() {
        diff / denom
    } else {
        diff
    }
}

pub fn complexify<T: Real>(v: &[T]) -> Vec<Complex<T>> {
    v.iter().map(|&x| Complex::new(x, T::zero())).collect()
}
