//! Odd-restricted coupling layer (RealNVP-style), an alternate flow backend
//! for dimension `D > 1`.
//!
//! A coupling layer passes masked coordinates through unchanged and applies
//! `y = s(x_masked) * x + t(x_masked)` to the rest. Restricting `s` to an
//! even function and `t` to an odd function of the masked block makes the
//! whole map odd, which is what the analytic-mean construction needs. Both
//! are carved out of one shared network via the symmetric/antisymmetric
//! split `f(x) ± f(-x)`, and `s` is squashed into `(1-tau, 1/(1-tau))` with
//! the same bound used for spline slopes, so the layer is bi-Lipschitz.
//!
//! The Jacobian is triangular: its log-determinant is the sum of `ln s` over
//! the transformed coordinates (masked coordinates contribute unit
//! derivative).
//!
//! The default policy never uses this backend (the spline flow is exact per
//! axis and works for `D = 1`); it ships as a standalone, tested component.

use alloc::vec::Vec;

use crate::nonlin::{squaresign, Smoothness};
use crate::rng::Rng64;

/// Split a vector map into its even and odd parts:
/// `even(x) = (f(x) + f(-x)) / 2`, `odd(x) = (f(x) - f(-x)) / 2`.
pub struct EvenOdd<F> {
    f: F,
}

pub fn make_even_odd<F: Fn(&[f64]) -> Vec<f64>>(f: F) -> EvenOdd<F> {
    EvenOdd { f }
}

impl<F: Fn(&[f64]) -> Vec<f64>> EvenOdd<F> {
    /// Both parts from one pair of evaluations.
    pub fn both(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let neg: Vec<f64> = x.iter().map(|&v| -v).collect();
        let fx = (self.f)(x);
        let fn_ = (self.f)(&neg);
        let even = fx.iter().zip(&fn_).map(|(a, b)| 0.5 * (a + b)).collect();
        let odd = fx.iter().zip(&fn_).map(|(a, b)| 0.5 * (a - b)).collect();
        (even, odd)
    }

    pub fn even(&self, x: &[f64]) -> Vec<f64> {
        self.both(x).0
    }

    pub fn odd(&self, x: &[f64]) -> Vec<f64> {
        self.both(x).1
    }
}

/// A one-hidden-layer network `D -> hidden -> 2D` with squaresign
/// activation; the first `D` outputs drive the scale, the rest the
/// translation.
#[derive(Clone, Debug)]
pub struct ConditionNet {
    dim: usize,
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl ConditionNet {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        ConditionNet {
            dim,
            hidden,
            w1: alloc::vec![0.0; hidden * dim],
            b1: alloc::vec![0.0; hidden],
            w2: alloc::vec![0.0; 2 * dim * hidden],
            b2: alloc::vec![0.0; 2 * dim],
        }
    }

    pub fn random(rng: &mut Rng64, dim: usize, hidden: usize) -> Self {
        let mut net = Self::zeros(dim, hidden);
        let bound1 = 1.0 / libm::sqrt(dim as f64);
        for w in &mut net.w1 {
            *w = rng.uniform_in(-bound1, bound1);
        }
        let bound2 = 1.0 / libm::sqrt(hidden as f64);
        for w in &mut net.w2 {
            *w = rng.uniform_in(-bound2, bound2);
        }
        for b in &mut net.b2 {
            *b = rng.uniform_in(-0.5, 0.5);
        }
        net
    }

    /// Direct access to the output bias, used by tests to pin constant
    /// scale/translation values.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        &mut self.b2
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let b = Smoothness::DEFAULT;
        let mut hidden = Vec::with_capacity(self.hidden);
        for h in 0..self.hidden {
            let mut acc = self.b1[h];
            for (i, &xi) in x.iter().enumerate() {
                acc += self.w1[h * self.dim + i] * xi;
            }
            hidden.push(squaresign(acc, b));
        }
        let mut out = Vec::with_capacity(2 * self.dim);
        for o in 0..2 * self.dim {
            let mut acc = self.b2[o];
            for (h, &ah) in hidden.iter().enumerate() {
                acc += self.w2[o * self.hidden + h] * ah;
            }
            out.push(acc);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CouplingError {
    /// The mask must keep at least one coordinate and transform at least one.
    BadMask,
    DimMismatch { expected: usize, got: usize },
    TauOutOfRange(f64),
}

impl core::fmt::Display for CouplingError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CouplingError::BadMask => write!(f, "mask needs at least one kept and one transformed coordinate"),
            CouplingError::DimMismatch { expected, got } => {
                write!(f, "point has dimension {got}, layer expects {expected}")
            }
            CouplingError::TauOutOfRange(t) => write!(f, "tau must be in (0, 1), got {t}"),
        }
    }
}

/// One odd-restricted coupling layer.
#[derive(Clone, Debug)]
pub struct CouplingLayer {
    /// `true` entries pass through and condition the rest.
    mask: Vec<bool>,
    tau: f64,
    net: ConditionNet,
}

impl CouplingLayer {
    pub fn new(mask: Vec<bool>, tau: f64, net: ConditionNet) -> Result<Self, CouplingError> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(CouplingError::TauOutOfRange(tau));
        }
        let kept = mask.iter().filter(|&&m| m).count();
        if mask.len() < 2 || kept == 0 || kept == mask.len() || net.dim != mask.len() {
            return Err(CouplingError::BadMask);
        }
        Ok(CouplingLayer { mask, tau, net })
    }

    /// Random layer with a random valid mask, fixed at construction.
    pub fn random(rng: &mut Rng64, dim: usize, tau: f64, hidden: usize) -> Self {
        let net = ConditionNet::random(rng, dim, hidden);
        let mask = loop {
            let m: Vec<bool> = (0..dim).map(|_| rng.uniform() < 0.5).collect();
            let kept = m.iter().filter(|&&v| v).count();
            if kept > 0 && kept < dim {
                break m;
            }
        };
        CouplingLayer::new(mask, tau, net).expect("constructed mask is valid")
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Scale and translation conditioned on the masked block of `x`.
    /// The scale is even in the block and bounded in `(1-tau, 1/(1-tau))`;
    /// the translation is odd.
    fn scale_translate(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let masked: Vec<f64> =
            x.iter().zip(&self.mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
        let dim = self.dim();
        let split = make_even_odd(|u: &[f64]| self.net.eval(u));
        let (even, odd) = split.both(&masked);
        let ln_lo = libm::log(1.0 - self.tau);
        let scale = even[..dim]
            .iter()
            .map(|&e| libm::exp(ln_lo * squaresign(e, Smoothness::DEFAULT)))
            .collect();
        let translate = odd[dim..].to_vec();
        (scale, translate)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, CouplingError> {
        self.check(x)?;
        let (s, t) = self.scale_translate(x);
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| if self.mask[i] { v } else { s[i] * v + t[i] })
            .collect())
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>, CouplingError> {
        self.check(y)?;
        // The masked block is unchanged by forward, so conditioning on y
        // reproduces the forward-pass scale and translation.
        let (s, t) = self.scale_translate(y);
        Ok(y.iter()
            .enumerate()
            .map(|(i, &v)| if self.mask[i] { v } else { (v - t[i]) / s[i] })
            .collect())
    }

    /// `sum ln s_i` over transformed coordinates: the log-determinant of the
    /// triangular coupling Jacobian.
    pub fn log_det(&self, x: &[f64]) -> Result<f64, CouplingError> {
        self.check(x)?;
        let (s, _) = self.scale_translate(x);
        Ok(self
            .mask
            .iter()
            .zip(&s)
            .filter(|(&m, _)| !m)
            .map(|(_, &si)| libm::log(si))
            .sum())
    }

    fn check(&self, x: &[f64]) -> Result<(), CouplingError> {
        if x.len() != self.dim() {
            Err(CouplingError::DimMismatch { expected: self.dim(), got: x.len() })
        } else {
            Ok(())
        }
    }
}
