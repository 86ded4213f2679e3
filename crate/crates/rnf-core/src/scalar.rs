//! Scalar abstraction shared by the plain and the taped evaluation paths.
//!
//! All numeric code in this crate is generic over [`Scalar`]. Instantiated
//! with `f64` it runs as ordinary floating-point math (the inference path);
//! instantiated with [`crate::autodiff::Var`] the same code records onto a
//! reverse-mode tape. Because both paths execute the identical sequence of
//! operations, taped forward values match plain evaluation bit for bit.

use core::ops::{Add, Div, Mul, Neg, Sub};

/// A differentiable scalar.
///
/// Constants stay `f64` on the right-hand side of mixed operations; for the
/// occasional `const - x` / `const / x` the [`Scalar::rsub`] and
/// [`Scalar::rdiv`] methods avoid requiring operator impls on `f64` itself.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Plain value, used for data-dependent control flow (interval lookup,
    /// branch selection). Decisions taken on `raw` are never differentiated.
    fn raw(self) -> f64;

    /// A constant in the same evaluation context as `self` (on the same tape
    /// for taped scalars).
    fn lift(self, c: f64) -> Self;

    /// `minuend - self`.
    fn rsub(self, minuend: f64) -> Self;

    /// `numerator / self`.
    fn rdiv(self, numerator: f64) -> Self;

    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn abs(self) -> Self;
    fn powf(self, exponent: f64) -> Self;
    fn ln_gamma(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn raw(self) -> f64 {
        self
    }

    #[inline]
    fn lift(self, c: f64) -> f64 {
        c
    }

    #[inline]
    fn rsub(self, minuend: f64) -> f64 {
        minuend - self
    }

    #[inline]
    fn rdiv(self, numerator: f64) -> f64 {
        numerator / self
    }

    #[inline]
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }

    #[inline]
    fn ln(self) -> f64 {
        libm::log(self)
    }

    #[inline]
    fn exp(self) -> f64 {
        libm::exp(self)
    }

    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }

    #[inline]
    fn powf(self, exponent: f64) -> f64 {
        libm::pow(self, exponent)
    }

    #[inline]
    fn ln_gamma(self) -> f64 {
        crate::special::ln_gamma(self)
    }
}
