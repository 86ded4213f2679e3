//! Odd-restricted linear rational spline (LRS) transform.
//!
//! One monotone rational spline per action dimension maps the standardized
//! residual on `[-c, c]` to itself and is the identity outside. The spline
//! is assembled from a *half* spline on the first half of the interval,
//! mirrored through the center knot at `(1/2, 1/2)`, which makes the overall
//! map an odd function of the residual — the property that keeps the mean of
//! the transformed distribution analytic.
//!
//! The transform runs in normalized coordinates: encode
//! `q = (eps + c) / (2c)`, locate the knot interval, interpolate
//! `phi -> psi` with the rational kernel, decode. The inverse is closed
//! form: the same kernel with the roles of the two axes (and of the relay
//! pair `phi_m`/`psi_m`, and of `w_s`,`w_e` with `w_m`) swapped. The
//! per-axis derivative is analytic, so the log-determinant costs one segment
//! evaluation.
//!
//! Every free parameter is bounded by the stability knob `tau` in `(0, 1)`:
//! knot slopes and interval aspect ratios live in `(1-tau, 1/(1-tau))`,
//! relays in `((1-tau)/2, (1+tau)/2)`, the knot count is
//! `K = round(2^{5 tau})` and the half-width `c = 5 tau`, so the map is
//! bi-Lipschitz with condition bounded by `1/(1-tau)`.

use alloc::vec::Vec;

use crate::nonlin::{squaremax, squaresign, Smoothness};
use crate::scalar::Scalar;

/// Hyper-parameters derived from the stability knob `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowHyper {
    pub tau: f64,
    /// Interval count `K` of the half spline (the full spline has `2K`).
    pub half_intervals: usize,
    /// Half-width `c` of the transform interval `[-c, c]`.
    pub half_width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowError {
    /// `tau` must lie strictly inside `(0, 1)`.
    TauOutOfRange(f64),
    /// A raw-parameter head has the wrong length.
    WrongParamLength { expected: usize, got: usize },
}

impl core::fmt::Display for FlowError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FlowError::TauOutOfRange(t) => write!(f, "tau must be in (0, 1), got {t}"),
            FlowError::WrongParamLength { expected, got } => {
                write!(f, "raw parameter head length {got}, expected {expected}")
            }
        }
    }
}

fn round_ties_even(x: f64) -> f64 {
    let floor = libm::floor(x);
    let diff = x - floor;
    if diff > 0.5 {
        floor + 1.0
    } else if diff < 0.5 {
        floor
    } else if (floor as i64) & 1 == 0 {
        floor
    } else {
        floor + 1.0
    }
}

/// `K = round(2^{5 tau})` (ties to even) and `c = 5 tau`.
pub fn derive_hyper(tau: f64) -> Result<FlowHyper, FlowError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(FlowError::TauOutOfRange(tau));
    }
    let half_intervals = round_ties_even(libm::exp2(5.0 * tau)) as usize;
    Ok(FlowHyper { tau, half_intervals, half_width: 5.0 * tau })
}

/// Parameters of the half spline: `K + 1` knots on each axis, one relay per
/// interval, one slope per knot. Knot positions are normalized to `[0, 1]`
/// with the ends pinned, and the boundary slopes are pinned to one.
#[derive(Clone, Debug)]
pub struct HalfSpline<S> {
    pub base: Vec<S>,
    pub target: Vec<S>,
    pub relay: Vec<S>,
    pub slope: Vec<S>,
}

/// The full mirrored spline: `2K + 1` knots, point-symmetric about
/// `(1/2, 1/2)`, unit slopes at both ends.
#[derive(Clone, Debug)]
pub struct KnotTable<S> {
    pub base: Vec<S>,
    pub target: Vec<S>,
    pub relay: Vec<S>,
    pub slope: Vec<S>,
}

impl<S: Scalar> KnotTable<S> {
    pub fn knot_count(&self) -> usize {
        self.base.len()
    }
}

/// Map unconstrained head outputs onto half-spline parameters.
///
/// - slopes: `d = exp(ln(1-tau) * squaresign(y))` for interior knots, in
///   `(1-tau, 1/(1-tau))`; the head entries for the two boundary knots are
///   ignored because those slopes are pinned to one,
/// - relays: `phi_m = (1 + tau * squaresign(y)) / 2`, in
///   `((1-tau)/2, (1+tau)/2)`,
/// - knot gaps per axis: `(squaremax(y) + (1-tau)/tau) / (1 + K (1-tau)/tau)`,
///   which sum to one and bound every aspect ratio inside
///   `(1-tau, 1/(1-tau))`. Knots are the running sums of the gaps,
///   renormalized so the last knot is exactly one.
pub fn map_raw_params<S: Scalar>(
    y_slope: &[S],
    y_relay: &[S],
    y_base_gap: &[S],
    y_target_gap: &[S],
    hyper: &FlowHyper,
) -> Result<HalfSpline<S>, FlowError> {
    let k = hyper.half_intervals;
    check_len(y_slope, k + 1)?;
    check_len(y_relay, k)?;
    check_len(y_base_gap, k)?;
    check_len(y_target_gap, k)?;

    let tau = hyper.tau;
    let ln_one_minus_tau = libm::log(1.0 - tau);
    let b = Smoothness::DEFAULT;

    let mut slope = Vec::with_capacity(k + 1);
    for (i, &y) in y_slope.iter().enumerate() {
        if i == 0 || i == k {
            slope.push(y.lift(1.0));
        } else {
            slope.push((squaresign(y, b) * ln_one_minus_tau).exp());
        }
    }

    let relay: Vec<S> = y_relay
        .iter()
        .map(|&y| (squaresign(y, b) * tau + 1.0) * 0.5)
        .collect();

    let base = knots_from_gaps(y_base_gap, hyper)?;
    let target = knots_from_gaps(y_target_gap, hyper)?;

    Ok(HalfSpline { base, target, relay, slope })
}

fn check_len<S>(v: &[S], expected: usize) -> Result<(), FlowError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(FlowError::WrongParamLength { expected, got: v.len() })
    }
}

fn knots_from_gaps<S: Scalar>(y: &[S], hyper: &FlowHyper) -> Result<Vec<S>, FlowError> {
    let k = hyper.half_intervals;
    let tau = hyper.tau;
    let floor = (1.0 - tau) / tau;
    let denom = 1.0 + k as f64 * floor;
    let weights = squaremax(y, Smoothness::DEFAULT)
        .map_err(|_| FlowError::WrongParamLength { expected: k, got: 0 })?;

    let mut knots = Vec::with_capacity(k + 1);
    knots.push(y[0].lift(0.0));
    let mut running = (weights[0] + floor) / denom;
    knots.push(running);
    for &w in &weights[1..] {
        running = running + (w + floor) / denom;
        knots.push(running);
    }
    // The gap construction sums to one analytically; divide the rounding
    // residue out so the last knot is exactly one.
    let total = knots[k];
    for knot in knots.iter_mut().skip(1) {
        *knot = *knot / total;
    }
    Ok(knots)
}

/// Mirror a half spline into the full odd table.
///
/// The half spline is compressed into `[0, 1/2]` and point-reflected through
/// `(1/2, 1/2)`: knots `[q/2, 1 - reverse(q)/2]`, relays
/// `[phi_m, 1 - reverse(phi_m)]`, slopes `[d, reverse(d)]` (shared center
/// entry). The center knot lands exactly on `(1/2, 1/2)`, which pins the
/// transform to the origin.
pub fn mirror<S: Scalar>(half: &HalfSpline<S>, hyper: &FlowHyper) -> KnotTable<S> {
    let k = hyper.half_intervals;
    debug_assert_eq!(half.base.len(), k + 1);
    debug_assert_eq!(half.relay.len(), k);
    debug_assert_eq!(half.slope.len(), k + 1);
    debug_assert_eq!(half.slope[0].raw(), 1.0, "boundary slope must be one");
    debug_assert_eq!(half.slope[k].raw(), 1.0, "boundary slope must be one");

    let fold = |knots: &[S]| -> Vec<S> {
        let mut full = Vec::with_capacity(2 * k + 1);
        for &q in &knots[..k] {
            full.push(q * 0.5);
        }
        for i in 0..=k {
            full.push((knots[k - i] * 0.5).rsub(1.0));
        }
        full
    };
    let base = fold(&half.base);
    let target = fold(&half.target);

    let mut relay = Vec::with_capacity(2 * k);
    relay.extend_from_slice(&half.relay);
    for i in 0..k {
        relay.push(half.relay[k - 1 - i].rsub(1.0));
    }

    let mut slope = Vec::with_capacity(2 * k + 1);
    slope.extend_from_slice(&half.slope[..k]);
    for i in 0..=k {
        slope.push(half.slope[k - i]);
    }

    let table = KnotTable { base, target, relay, slope };
    debug_assert!(
        validate_table(&table, hyper).is_ok(),
        "mirrored table violates its invariants: {:?}",
        validate_table(&table, hyper)
    );
    table
}

/// Greatest `k` with `knots[k] <= q`, clamped to a valid interval index.
/// A query exactly on a knot belongs to the interval on its right.
fn locate<S: Scalar>(knots: &[S], q: f64) -> usize {
    let n = knots.len();
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if knots[mid].raw() <= q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.min(n - 2)
}

/// Derived quantities of one knot interval.
struct Segment<S> {
    base_width: S,
    target_width: S,
    relay: S,
    /// `psi_m`, the image of the relay — where the output-side branches meet.
    relay_out: S,
    w_start: S,
    w_end: S,
    w_mid: S,
}

fn segment<S: Scalar>(table: &KnotTable<S>, k: usize) -> Segment<S> {
    let base_width = table.base[k + 1] - table.base[k];
    let target_width = table.target[k + 1] - table.target[k];
    let w_start = table.slope[k].sqrt().rdiv(1.0);
    let w_end = table.slope[k + 1].sqrt().rdiv(1.0);
    let ratio = base_width / target_width;
    let relay = table.relay[k];
    let w_mid = (relay / w_start + relay.rsub(1.0) / w_end) * ratio;
    let relay_out = relay / (w_start * w_mid) * ratio;
    Segment { base_width, target_width, relay, relay_out, w_start, w_end, w_mid }
}

/// The rational interpolation kernel on one interval, `phi -> psi`.
fn kernel<S: Scalar>(phi: S, seg: &Segment<S>) -> S {
    if phi.raw() < seg.relay.raw() {
        (seg.relay_out * seg.w_mid * phi) / (seg.w_mid * phi + seg.w_start * (seg.relay - phi))
    } else {
        let rest = phi.rsub(1.0);
        let tail = seg.w_end * (phi - seg.relay);
        (seg.relay_out * seg.w_mid * rest + tail) / (seg.w_mid * rest + tail)
    }
}

/// The closed-form inverse kernel, `psi -> phi`: the forward kernel with the
/// two axes swapped (`phi_m <-> psi_m`, `w_s`/`w_e` <-> `w_m`).
fn kernel_inverse<S: Scalar>(psi: S, seg: &Segment<S>) -> S {
    if psi.raw() < seg.relay_out.raw() {
        (seg.relay * seg.w_start * psi) / (seg.w_start * psi + seg.w_mid * (seg.relay_out - psi))
    } else {
        let rest = psi.rsub(1.0);
        let tail = seg.w_mid * (psi - seg.relay_out);
        (seg.relay * seg.w_end * rest + tail) / (seg.w_end * rest + tail)
    }
}

/// Transform a standardized residual. Identity outside `[-c, c]`, strictly
/// increasing, odd, and pinned to the interval ends.
pub fn forward<S: Scalar>(eps: S, table: &KnotTable<S>, hyper: &FlowHyper) -> S {
    let c = hyper.half_width;
    if f64::abs(eps.raw()) >= c {
        return eps;
    }
    let q_in = (eps + c) / (2.0 * c);
    let k = locate(&table.base, q_in.raw());
    let seg = segment(table, k);
    let phi = (q_in - table.base[k]) / seg.base_width;
    let q_out = seg.target_width * kernel(phi, &seg) + table.target[k];
    q_out * (2.0 * c) - c
}

/// Closed-form inverse of [`forward`] (no root finding).
pub fn inverse<S: Scalar>(eps_t: S, table: &KnotTable<S>, hyper: &FlowHyper) -> S {
    let c = hyper.half_width;
    if f64::abs(eps_t.raw()) >= c {
        return eps_t;
    }
    let q_in = (eps_t + c) / (2.0 * c);
    let k = locate(&table.target, q_in.raw());
    let seg = segment(table, k);
    let psi = (q_in - table.target[k]) / seg.target_width;
    let q_out = seg.base_width * kernel_inverse(psi, &seg) + table.base[k];
    q_out * (2.0 * c) - c
}

/// Log of the per-axis derivative `d eps_t / d eps_b` at `eps`. Zero outside
/// the interval and at its ends (boundary slopes are one). The full
/// transform is diagonal across dimensions, so the log-determinant of a
/// multi-dimensional flow is the sum of this over dimensions.
pub fn log_abs_det_grad<S: Scalar>(eps: S, table: &KnotTable<S>, hyper: &FlowHyper) -> S {
    let c = hyper.half_width;
    if f64::abs(eps.raw()) >= c {
        return eps.lift(0.0);
    }
    let q_in = (eps + c) / (2.0 * c);
    let k = locate(&table.base, q_in.raw());
    let seg = segment(table, k);
    let phi = (q_in - table.base[k]) / seg.base_width;
    let scale = seg.target_width / seg.base_width;
    let grad = if phi.raw() < seg.relay.raw() {
        let denom = seg.w_mid * phi + seg.w_start * (seg.relay - phi);
        scale * (seg.w_mid * seg.w_start * seg.relay_out * seg.relay) / (denom * denom)
    } else {
        let denom = seg.w_mid * phi.rsub(1.0) + seg.w_end * (phi - seg.relay);
        scale * (seg.w_mid * seg.w_end * seg.relay_out.rsub(1.0) * seg.relay.rsub(1.0))
            / (denom * denom)
    };
    grad.ln()
}

/// Structural defects detectable in a knot table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableDefect {
    BadLengths,
    BadEndpoints,
    NotMonotoneBase { index: usize },
    NotMonotoneTarget { index: usize },
    BoundarySlopeNotOne,
    AsymmetricKnot { index: usize },
    AsymmetricRelay { index: usize },
    AsymmetricSlope { index: usize },
    SlopeOutOfRange { index: usize },
    RatioOutOfRange { index: usize },
    RelayOutOfRange { index: usize },
}

impl core::fmt::Display for TableDefect {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Check every structural invariant of a mirrored table: lengths, pinned
/// ends, strict monotonicity, point symmetry (to 1e-15), unit boundary
/// slopes, and the `tau` bounds on slopes, relays and aspect ratios.
pub fn validate_table<S: Scalar>(
    table: &KnotTable<S>,
    hyper: &FlowHyper,
) -> Result<(), TableDefect> {
    let n = table.base.len();
    let k2 = n - 1; // 2K
    if n < 3
        || table.target.len() != n
        || table.slope.len() != n
        || table.relay.len() != n - 1
        || k2 != 2 * hyper.half_intervals
    {
        return Err(TableDefect::BadLengths);
    }
    let raw = |v: &S| v.raw();
    if raw(&table.base[0]) != 0.0
        || raw(&table.target[0]) != 0.0
        || raw(&table.base[k2]) != 1.0
        || raw(&table.target[k2]) != 1.0
    {
        return Err(TableDefect::BadEndpoints);
    }
    if raw(&table.slope[0]) != 1.0 || raw(&table.slope[k2]) != 1.0 {
        return Err(TableDefect::BoundarySlopeNotOne);
    }
    for i in 0..k2 {
        if !(raw(&table.base[i + 1]) > raw(&table.base[i])) {
            return Err(TableDefect::NotMonotoneBase { index: i });
        }
        if !(raw(&table.target[i + 1]) > raw(&table.target[i])) {
            return Err(TableDefect::NotMonotoneTarget { index: i });
        }
    }
    let sym_tol = 1e-15;
    for j in 0..=k2 {
        let m = k2 - j;
        if f64::abs(raw(&table.base[m]) + raw(&table.base[j]) - 1.0) > sym_tol
            || f64::abs(raw(&table.target[m]) + raw(&table.target[j]) - 1.0) > sym_tol
        {
            return Err(TableDefect::AsymmetricKnot { index: j });
        }
        if f64::abs(raw(&table.slope[m]) - raw(&table.slope[j])) > sym_tol {
            return Err(TableDefect::AsymmetricSlope { index: j });
        }
    }
    for i in 0..k2 {
        let m = k2 - 1 - i;
        if f64::abs(raw(&table.relay[m]) + raw(&table.relay[i]) - 1.0) > sym_tol {
            return Err(TableDefect::AsymmetricRelay { index: i });
        }
    }
    let lo = 1.0 - hyper.tau;
    let hi = 1.0 / (1.0 - hyper.tau);
    for (i, s) in table.slope.iter().enumerate() {
        let s = raw(s);
        if !(s > lo && s < hi) {
            return Err(TableDefect::SlopeOutOfRange { index: i });
        }
    }
    let relay_lo = 0.5 * (1.0 - hyper.tau);
    let relay_hi = 0.5 * (1.0 + hyper.tau);
    for (i, r) in table.relay.iter().enumerate() {
        let r = raw(r);
        if !(r > relay_lo && r < relay_hi) {
            return Err(TableDefect::RelayOutOfRange { index: i });
        }
    }
    for i in 0..k2 {
        let ratio = (raw(&table.target[i + 1]) - raw(&table.target[i]))
            / (raw(&table.base[i + 1]) - raw(&table.base[i]));
        if !(ratio > lo && ratio < hi) {
            return Err(TableDefect::RatioOutOfRange { index: i });
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::rng::Rng64;
    use alloc::vec::Vec;

    /// Identity table: uniform knots, unit slopes, centered relays.
    pub fn identity_table(hyper: &FlowHyper) -> KnotTable<f64> {
        let k = hyper.half_intervals;
        let zeros = |n: usize| alloc::vec![0.0f64; n];
        let half =
            map_raw_params(&zeros(k + 1), &zeros(k), &zeros(k), &zeros(k), hyper).unwrap();
        mirror(&half, hyper)
    }

    /// A random table through the standard head mappings.
    pub fn random_table(rng: &mut Rng64, hyper: &FlowHyper) -> KnotTable<f64> {
        let k = hyper.half_intervals;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.normal() * 2.0).collect()
        };
        let half =
            map_raw_params(&draw(k + 1), &draw(k), &draw(k), &draw(k), hyper).unwrap();
        mirror(&half, hyper)
    }
}
