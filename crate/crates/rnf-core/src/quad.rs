//! One-dimensional quadrature helpers used by normalization checks.

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct QuadOutcome {
    pub value: f64,
    /// False when the recursion hit its depth cap before reaching the
    /// requested tolerance anywhere.
    pub converged: bool,
}

/// Adaptive Simpson integration of `f` over `[lo, hi]`.
///
/// `tol` is the absolute tolerance for the whole interval; it is split in
/// half on each subdivision, the classic conservative schedule.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> QuadOutcome {
    let mid = 0.5 * (lo + hi);
    let f_lo = f(lo);
    let f_mid = f(mid);
    let f_hi = f(hi);
    let whole = simpson(lo, hi, f_lo, f_mid, f_hi);
    let mut converged = true;
    let value = recurse(
        f,
        lo,
        hi,
        f_lo,
        f_mid,
        f_hi,
        whole,
        tol,
        48,
        &mut converged,
    );
    QuadOutcome { value, converged }
}

#[inline]
fn simpson(lo: f64, hi: f64, f_lo: f64, f_mid: f64, f_hi: f64) -> f64 {
    (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_mid: f64,
    f_hi: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    converged: &mut bool,
) -> f64 {
    let mid = 0.5 * (lo + hi);
    let lq = 0.5 * (lo + mid);
    let rq = 0.5 * (mid + hi);
    let f_lq = f(lq);
    let f_rq = f(rq);
    let left = simpson(lo, mid, f_lo, f_lq, f_mid);
    let right = simpson(mid, hi, f_mid, f_rq, f_hi);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *converged = false;
        return left + right;
    }
    let half_tol = 0.5 * tol;
    recurse(f, lo, mid, f_lo, f_lq, f_mid, left, half_tol, depth - 1, converged)
        + recurse(f, mid, hi, f_mid, f_rq, f_hi, right, half_tol, depth - 1, converged)
}

/// Trapezoid sum over tabulated points `(x_i, y_i)`; `xs` must be sorted.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let out = adaptive_simpson(&|x| x * x * x + 2.0 * x, 0.0, 2.0, 1e-12);
        assert!(out.converged);
        assert!((out.value - 8.0).abs() < 1e-10);
    }

    #[test]
    fn integrates_a_gaussian_density() {
        let inv = 1.0 / (2.0 * core::f64::consts::PI).sqrt();
        let f = |x: f64| inv * (-0.5 * x * x).exp();
        let out = adaptive_simpson(&f, -40.0, 40.0, 1e-9);
        assert!(out.converged);
        assert!((out.value - 1.0).abs() < 1e-8, "got {}", out.value);
    }

    #[test]
    fn trapezoid_matches_closed_form() {
        let xs: std::vec::Vec<f64> = (0..1001).map(|i| i as f64 / 1000.0).collect();
        let ys: std::vec::Vec<f64> = xs.iter().map(|x| x * x).collect();
        let got = trapezoid(&xs, &ys);
        assert!((got - 1.0 / 3.0).abs() < 1e-6);
    }
}
