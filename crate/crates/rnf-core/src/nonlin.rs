//! The squareplus function family.
//!
//! Exponential-free replacements for softplus / sigmoid / tanh / swish /
//! softmax, built from `x ± sqrt(x^2 + b)`. They are cheap, total over the
//! double range, and their gradients approach the edges of their codomains
//! slowly, which keeps backpropagation well conditioned.

use alloc::vec::Vec;

use crate::scalar::Scalar;

/// Smoothness parameter `b >= 0` shared by the whole family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothness(f64);

impl Smoothness {
    /// The conventional default, `b = 4`, which makes `squareplus(0) = 1`
    /// and matches the unit-slope scale of softplus.
    pub const DEFAULT: Smoothness = Smoothness(4.0);

    pub fn new(b: f64) -> Result<Self, SmoothnessError> {
        if b.is_finite() && b >= 0.0 {
            Ok(Smoothness(b))
        } else {
            Err(SmoothnessError { value: b })
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Smoothness {
    fn default() -> Self {
        Smoothness::DEFAULT
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessError {
    pub value: f64,
}

impl core::fmt::Display for SmoothnessError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "smoothness must be finite and non-negative, got {}", self.value)
    }
}

/// Error for [`squaremax`] on an empty input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmptyInput;

impl core::fmt::Display for EmptyInput {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "squaremax requires a non-empty input")
    }
}

/// `sqrt(x^2 + b)` without overflow for |x| beyond where `x*x` is
/// representable. The rescaled branch keeps all intermediates finite so the
/// taped gradient stays finite too.
fn sqrt_x2_plus_b<S: Scalar>(x: S, b: f64) -> S {
    let ax = x.abs();
    if ax.raw() > 1e150 {
        let t = ax.rdiv(b) / ax; // b / x^2, evaluated without forming x^2
        ax * (t + 1.0).sqrt()
    } else {
        (x * x + b).sqrt()
    }
}

/// `squareplus(x) = (x + sqrt(x^2 + b)) / 2`, strictly positive for `b > 0`.
///
/// For `x < 0` the algebraically identical form `(b/2) / (sqrt(x^2+b) - x)`
/// is used; the textbook form cancels catastrophically there and can even
/// round to zero, violating positivity.
pub fn squareplus<S: Scalar>(x: S, b: Smoothness) -> S {
    let r = sqrt_x2_plus_b(x, b.get());
    if x.raw() >= 0.0 {
        (x + r) * 0.5
    } else {
        (r - x).rdiv(0.5 * b.get())
    }
}

/// `squmoid(x) = (x / sqrt(x^2 + b) + 1) / 2`, the derivative of
/// [`squareplus`]; ranges over `(0, 1)`.
pub fn squmoid<S: Scalar>(x: S, b: Smoothness) -> S {
    let r = sqrt_x2_plus_b(x, b.get());
    (x / r + 1.0) * 0.5
}

/// `squaresign(x) = 2x / sqrt(4x^2 + b) = 2 squmoid(2x) - 1`; odd, ranges
/// over `(-1, 1)`.
pub fn squaresign<S: Scalar>(x: S, b: Smoothness) -> S {
    let two_x = x * 2.0;
    two_x / sqrt_x2_plus_b(two_x, b.get())
}

/// `squish(x) = squmoid(x) * x`, the squareplus analogue of swish.
pub fn squish<S: Scalar>(x: S, b: Smoothness) -> S {
    squmoid(x, b) * x
}

/// Elementwise [`squareplus`] normalized to sum to one.
pub fn squaremax<S: Scalar>(v: &[S], b: Smoothness) -> Result<Vec<S>, EmptyInput> {
    if v.is_empty() {
        return Err(EmptyInput);
    }
    let sp: Vec<S> = v.iter().map(|&x| squareplus(x, b)).collect();
    let mut total = sp[0];
    for &s in &sp[1..] {
        total = total + s;
    }
    Ok(sp.into_iter().map(|s| s / total).collect())
}
