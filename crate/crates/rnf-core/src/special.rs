//! Small special-function kit: log-gamma and digamma for positive arguments.
//!
//! `ln_gamma` delegates to libm. `digamma` is needed as the local derivative
//! of `ln_gamma` on the autodiff tape; it uses the standard recurrence to
//! push the argument above 10 and then the asymptotic series, which is
//! accurate to ~1e-12 there.

/// Natural log of the gamma function, `x > 0`.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Digamma (psi) function for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma domain is x > 0, got {x}");
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // Asymptotic expansion: ln x - 1/(2x) - sum B_2n / (2n x^{2n}).
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
    acc + libm::log(x) - 0.5 * inv - series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_reference_points() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(2.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        // Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - 0.5 * core::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn digamma_matches_statrs() {
        for &x in &[0.3, 0.5, 1.0, 1.7, 2.0, 3.25, 6.0, 11.5, 120.0, 5e5] {
            let want = statrs::function::gamma::digamma(x);
            let got = digamma(x);
            assert!(
                (got - want).abs() < 1e-10 * want.abs().max(1.0),
                "x={x}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn digamma_is_derivative_of_ln_gamma() {
        let h = 1e-6;
        for &x in &[0.7, 1.3, 2.5, 8.0, 40.0] {
            let cd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert!((cd - digamma(x)).abs() < 1e-8, "x={x}");
        }
    }
}
