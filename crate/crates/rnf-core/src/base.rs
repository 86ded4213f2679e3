//! Diagonal normal / student-t bases and their finite mixtures.
//!
//! These play two roles: as baseline policies in their own right, and as the
//! symmetric base `p_b` of the restricted flows. Densities are diagonal —
//! a product of univariate kernels with per-dimension location and scale;
//! the student-t degrees of freedom is a single scalar shared across
//! dimensions (the q-Gaussian-derived construction ties it to the dimension
//! count, see [`map_dof`]).

use alloc::vec::Vec;

use crate::nonlin::{squaremax, squareplus, squmoid, Smoothness};
use crate::rng::Rng64;
use crate::scalar::Scalar;

/// `ln(2*pi)`.
const LN_TWO_PI: f64 = 1.8378770664093453;
/// `ln(pi)`.
const LN_PI: f64 = 1.1447298858494002;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Normal,
    StudentT,
}

/// Per-dimension location/scale plus an optional shared degrees of freedom.
#[derive(Clone, Debug)]
pub struct BaseParams<S> {
    pub loc: Vec<S>,
    pub scale: Vec<S>,
    /// Degrees of freedom; required by the student-t family, ignored by the
    /// normal family.
    pub dof: Option<S>,
}

impl<S: Scalar> BaseParams<S> {
    pub fn dim(&self) -> usize {
        self.loc.len()
    }
}

/// A finite mixture over a shared family. Weights are a simplex.
#[derive(Clone, Debug)]
pub struct MixtureParams<S> {
    pub components: Vec<BaseParams<S>>,
    pub weights: Vec<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistError {
    /// A scale entry is not strictly positive.
    InvalidScale,
    /// Input/parameter dimensions disagree.
    DimMismatch,
    /// The student-t family needs degrees of freedom.
    MissingDof,
    /// A mean was requested but some component has `dof <= 1`.
    MeanUndefined,
    /// Weight vector of the wrong length for the requested mapping.
    BadWeightLength,
    /// Mixture weights and components disagree in length, or weights empty.
    BadMixture,
}

impl core::fmt::Display for DistError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let msg = match self {
            DistError::InvalidScale => "scale must be strictly positive",
            DistError::DimMismatch => "dimension mismatch",
            DistError::MissingDof => "student-t requires degrees of freedom",
            DistError::MeanUndefined => "mean undefined: degrees of freedom <= 1",
            DistError::BadWeightLength => "weight head has the wrong length",
            DistError::BadMixture => "mixture weights/components mismatch",
        };
        write!(f, "{msg}")
    }
}

/// Scale head: an unconstrained real to a strictly positive scale.
pub fn map_scale<S: Scalar>(y: S) -> S {
    squareplus(y, Smoothness::DEFAULT)
}

/// Degrees-of-freedom head.
///
/// Via the q-Gaussian correspondence, `nu = 2/(q-1) - D` with
/// `q - 1 = squmoid(y)/D` constrained to `(0, 1/D)`, which guarantees
/// `nu > D >= 1` and therefore a finite mean.
pub fn map_dof<S: Scalar>(y: S, dim: usize) -> S {
    let s = squmoid(y, Smoothness::DEFAULT);
    // For |y| beyond ~1e8 the squmoid rounds to its open bounds {0, 1};
    // pin it one ulp inside so nu stays strictly above D (and finite).
    let s = if s.raw() >= 1.0 {
        s.lift(1.0 - f64::EPSILON / 2.0)
    } else if s.raw() <= 0.0 {
        s.lift(f64::EPSILON / 2.0)
    } else {
        s
    };
    let q_minus_one = s / dim as f64;
    q_minus_one.rdiv(2.0) - dim as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightKind {
    /// A full simplex head over `n >= 2` components.
    Gmm,
    /// A single logit head for a two-component mixture: `[rho, 1 - rho]`.
    Bimodal,
}

/// Mixture-weight head.
pub fn map_weights<S: Scalar>(y: &[S], kind: WeightKind) -> Result<Vec<S>, DistError> {
    match kind {
        WeightKind::Gmm => {
            if y.len() < 2 {
                return Err(DistError::BadWeightLength);
            }
            squaremax(y, Smoothness::DEFAULT).map_err(|_| DistError::BadWeightLength)
        }
        WeightKind::Bimodal => {
            if y.len() != 1 {
                return Err(DistError::BadWeightLength);
            }
            let rho = squmoid(y[0], Smoothness::DEFAULT);
            Ok(alloc::vec![rho, rho.rsub(1.0)])
        }
    }
}

/// Log-density of the standard (zero location, unit scale) univariate
/// kernel at residual `e`.
pub fn std_log_pdf<S: Scalar>(e: S, dof: Option<S>, family: Family) -> Result<S, DistError> {
    match family {
        Family::Normal => Ok(-(e * e) * 0.5 - 0.5 * LN_TWO_PI),
        Family::StudentT => {
            let nu = dof.ok_or(DistError::MissingDof)?;
            let half_next = (nu + 1.0) * 0.5;
            Ok(half_next.ln_gamma()
                - (nu * 0.5).ln_gamma()
                - (nu.ln() + LN_PI) * 0.5
                - half_next * (e * e / nu + 1.0).ln())
        }
    }
}

/// Diagonal log-density at `x`.
pub fn log_pdf<S: Scalar>(x: &[f64], p: &BaseParams<S>, family: Family) -> Result<S, DistError> {
    if x.len() != p.dim() || p.scale.len() != p.dim() {
        return Err(DistError::DimMismatch);
    }
    let mut total: Option<S> = None;
    for d in 0..p.dim() {
        let sigma = p.scale[d];
        if !(sigma.raw() > 0.0) {
            return Err(DistError::InvalidScale);
        }
        let e = (p.loc[d].rsub(x[d])) / sigma;
        let term = std_log_pdf(e, p.dof, family)? - sigma.ln();
        total = Some(match total {
            None => term,
            Some(acc) => acc + term,
        });
    }
    Ok(total.expect("dim >= 1"))
}

/// Draw one point: `x = loc + scale * eps` with `eps` standard normal or
/// standard student-t (see [`crate::rng::Rng64::student_t`] for the exact
/// construction). One residual is consumed per dimension, in order.
pub fn sample(rng: &mut Rng64, p: &BaseParams<f64>, family: Family) -> Vec<f64> {
    (0..p.dim())
        .map(|d| {
            let eps = match family {
                Family::Normal => rng.normal(),
                Family::StudentT => rng.student_t(p.dof.expect("student-t requires dof")),
            };
            p.loc[d] + p.scale[d] * eps
        })
        .collect()
}

/// Numerically stable mixture log-density (log-sum-exp over components).
///
/// Components with exactly zero weight are skipped, and a weight of exactly
/// one short-circuits to that component, so the degenerate mixtures used in
/// tests reproduce the single-component density without round-off.
pub fn mixture_log_pdf<S: Scalar>(
    x: &[f64],
    m: &MixtureParams<S>,
    family: Family,
) -> Result<S, DistError> {
    let terms = mixture_log_terms(x, m, family)?;
    Ok(log_sum_exp(&terms))
}

/// Per-component `ln(weight_i) + log_pdf_i(x)`, the pieces of the mixture
/// density before the log-sum-exp.
pub fn mixture_log_terms<S: Scalar>(
    x: &[f64],
    m: &MixtureParams<S>,
    family: Family,
) -> Result<Vec<S>, DistError> {
    if m.components.is_empty() || m.components.len() != m.weights.len() {
        return Err(DistError::BadMixture);
    }
    let mut terms = Vec::with_capacity(m.components.len());
    for (comp, &w) in m.components.iter().zip(&m.weights) {
        if w.raw() == 0.0 {
            continue;
        }
        let lp = log_pdf(x, comp, family)?;
        if w.raw() == 1.0 {
            return Ok(alloc::vec![lp]);
        }
        terms.push(w.ln() + lp);
    }
    if terms.is_empty() {
        return Err(DistError::BadMixture);
    }
    Ok(terms)
}

/// `ln(sum_i exp(t_i))`, stabilized about the maximum term.
pub fn log_sum_exp<S: Scalar>(terms: &[S]) -> S {
    debug_assert!(!terms.is_empty());
    if terms.len() == 1 {
        return terms[0];
    }
    let mut top = terms[0];
    for &t in &terms[1..] {
        if t.raw() > top.raw() {
            top = t;
        }
    }
    let mut acc = (terms[0] - top).exp();
    for &t in &terms[1..] {
        acc = acc + (t - top).exp();
    }
    top + acc.ln()
}

/// Mean of a single base; requires `dof > 1` for the student-t family.
pub fn analytic_mean_base<S: Scalar>(
    p: &BaseParams<S>,
    family: Family,
) -> Result<Vec<S>, DistError> {
    if family == Family::StudentT {
        let nu = p.dof.ok_or(DistError::MissingDof)?;
        if !(nu.raw() > 1.0) {
            return Err(DistError::MeanUndefined);
        }
    }
    Ok(p.loc.clone())
}

/// Mean of a mixture: the weighted mean of component means.
pub fn analytic_mean<S: Scalar>(
    m: &MixtureParams<S>,
    family: Family,
) -> Result<Vec<S>, DistError> {
    if m.components.is_empty() || m.components.len() != m.weights.len() {
        return Err(DistError::BadMixture);
    }
    let dim = m.components[0].dim();
    let mut mean: Vec<S> = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut acc: Option<S> = None;
        for (comp, &w) in m.components.iter().zip(&m.weights) {
            if comp.dim() != dim {
                return Err(DistError::DimMismatch);
            }
            let mu = analytic_mean_base(comp, family)?[d];
            let term = w * mu;
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
        mean.push(acc.expect("non-empty mixture"));
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use statrs::distribution::ContinuousCDF;

    fn uni(loc: f64, scale: f64, dof: Option<f64>) -> BaseParams<f64> {
        BaseParams { loc: alloc::vec![loc], scale: alloc::vec![scale], dof }
    }

    #[test]
    fn map_scale_reference_points() {
        assert_eq!(map_scale(0.0), 1.0);
        assert!((map_scale(2.0) - 2.4142136).abs() < 1e-7);
        assert!(map_scale(-10.0) > 0.0);
    }

    #[test]
    fn map_dof_reference_points() {
        assert_eq!(map_dof(0.0, 2), 6.0);
        assert_eq!(map_dof(0.0, 1), 3.0);
        // Large y drives q-1 towards 1/D, so nu approaches its infimum
        // 2D - D = D without reaching it.
        let nu = map_dof(100.0, 1);
        assert!(nu > 1.0 && nu < 1.001, "nu={nu}");
        let nu = map_dof(1e12, 1);
        assert!(nu > 1.0, "nu={nu}");
    }

    #[test]
    fn map_dof_always_exceeds_dimension() {
        let mut rng = Rng64::seed_from(5);
        for _ in 0..1000 {
            let y = rng.uniform_in(-40.0, 40.0);
            let dim = 1 + (rng.next_u64() % 6) as usize;
            let nu = map_dof(y, dim);
            assert!(nu > dim as f64, "y={y} dim={dim} nu={nu}");
        }
    }

    #[test]
    fn map_weights_reference_points() {
        let w = map_weights(&[0.0, 0.0], WeightKind::Gmm).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        let w = map_weights(&[0.0], WeightKind::Bimodal).unwrap();
        assert_eq!(w, alloc::vec![0.5, 0.5]);
        let w = map_weights(&[2.0], WeightKind::Bimodal).unwrap();
        assert!((w[0] - 0.8535534).abs() < 1e-7);
        assert!((w[1] - 0.1464466).abs() < 1e-7);
        assert_eq!(map_weights(&[0.0], WeightKind::Gmm), Err(DistError::BadWeightLength));
        assert_eq!(
            map_weights(&[0.0, 1.0], WeightKind::Bimodal),
            Err(DistError::BadWeightLength)
        );
    }

    #[test]
    fn log_pdf_peak_values() {
        let normal = uni(0.3, 1.0, None);
        let got = log_pdf(&[0.3], &normal, Family::Normal).unwrap();
        assert!((got - (-0.9189385)).abs() < 1e-7);

        let cauchy = uni(-1.0, 1.0, Some(1.0));
        let got = log_pdf(&[-1.0], &cauchy, Family::StudentT).unwrap();
        assert!((got - (-1.1447299)).abs() < 1e-7);
    }

    #[test]
    fn log_pdf_rejects_bad_scale() {
        let p = uni(0.0, 0.0, None);
        assert_eq!(log_pdf(&[0.0], &p, Family::Normal), Err(DistError::InvalidScale));
    }

    #[test]
    fn student_log_pdf_matches_statrs() {
        let p = uni(0.7, 1.3, Some(4.5));
        let reference = statrs::distribution::StudentsT::new(0.7, 1.3, 4.5).unwrap();
        use statrs::distribution::Continuous;
        for &x in &[-3.0, 0.0, 0.7, 2.2, 9.0] {
            let got = log_pdf(&[x], &p, Family::StudentT).unwrap();
            let want = reference.ln_pdf(x);
            assert!((got - want).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn student_density_integrates_to_one() {
        // Quadrature oracle. nu >= 3 keeps the mass beyond 200 scales
        // below 1e-6, so no tail correction is needed here.
        let mut rng = Rng64::seed_from(8);
        for _ in 0..5 {
            let p = uni(
                rng.uniform_in(-2.0, 2.0),
                rng.uniform_in(0.3, 2.5),
                Some(rng.uniform_in(3.0, 20.0)),
            );
            let f = |x: f64| log_pdf(&[x], &p, Family::StudentT).unwrap().exp();
            let lo = p.loc[0] - 200.0 * p.scale[0];
            let hi = p.loc[0] + 200.0 * p.scale[0];
            let out = adaptive_simpson(&f, lo, hi, 1e-7);
            assert!(out.converged);
            assert!((out.value - 1.0).abs() < 1e-3, "integral {}", out.value);
        }
    }

    #[test]
    fn student_approaches_normal_for_large_dof() {
        let t = uni(0.0, 1.0, Some(1e6));
        let n = uni(0.0, 1.0, None);
        let mut worst = 0.0f64;
        for i in 0..200 {
            let x = -5.0 + 0.05 * i as f64;
            let a = log_pdf(&[x], &t, Family::StudentT).unwrap();
            let b = log_pdf(&[x], &n, Family::Normal).unwrap();
            worst = worst.max((a - b).abs());
        }
        assert!(worst < 1e-3, "max abs diff {worst}");
    }

    #[test]
    fn sampling_matches_the_mean_within_monte_carlo_error() {
        let mut rng = Rng64::seed_from(21);
        let n = 200_000;

        let p = uni(1.5, 2.0, None);
        let xs: std::vec::Vec<f64> =
            (0..n).map(|_| sample(&mut rng, &p, Family::Normal)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
        assert!((mean - 1.5).abs() <= 4.0 * std / (n as f64).sqrt(), "normal mean {mean}");

        let p = uni(-0.5, 1.0, Some(3.0));
        let xs: std::vec::Vec<f64> =
            (0..n).map(|_| sample(&mut rng, &p, Family::StudentT)[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
        assert!((mean + 0.5).abs() <= 4.0 * std / (n as f64).sqrt(), "student mean {mean}");
    }

    #[test]
    fn degenerate_scale_pins_samples_to_the_location() {
        let mut rng = Rng64::seed_from(31);
        let p = uni(0.25, 1e-12, None);
        for _ in 0..1000 {
            let x = sample(&mut rng, &p, Family::Normal)[0];
            assert!((x - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn sampler_empirical_cdf_passes_ks_against_reference_cdf() {
        // Two-sided one-sample KS at significance 0.001, N = 1e5
        // (asymptotic critical value c(alpha) = sqrt(ln(2/alpha)/2)).
        let n = 100_000usize;
        let crit = (f64::ln(2.0 / 0.001) / 2.0).sqrt() / (n as f64).sqrt();

        let cases: std::vec::Vec<(BaseParams<f64>, Family, std::boxed::Box<dyn Fn(f64) -> f64>)> = std::vec![
            (uni(0.5, 1.5, None), Family::Normal, {
                let d = statrs::distribution::Normal::new(0.5, 1.5).unwrap();
                std::boxed::Box::new(move |x| d.cdf(x))
            }),
            (uni(-1.0, 0.7, Some(4.0)), Family::StudentT, {
                let d = statrs::distribution::StudentsT::new(-1.0, 0.7, 4.0).unwrap();
                std::boxed::Box::new(move |x| d.cdf(x))
            }),
        ];
        let mut rng = Rng64::seed_from(77);
        for (p, family, cdf) in cases {
            let mut xs: std::vec::Vec<f64> =
                (0..n).map(|_| sample(&mut rng, &p, family)[0]).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut d_stat = 0.0f64;
            for (i, &x) in xs.iter().enumerate() {
                let c = cdf(x);
                d_stat = d_stat.max((c - i as f64 / n as f64).abs());
                d_stat = d_stat.max(((i + 1) as f64 / n as f64 - c).abs());
            }
            assert!(d_stat < crit, "KS statistic {d_stat} >= critical {crit}");
        }
    }

    #[test]
    fn mixture_reduces_to_single_component() {
        let a = uni(0.4, 1.1, Some(5.0));
        let m = MixtureParams {
            components: alloc::vec![a.clone(), a.clone()],
            weights: alloc::vec![0.3, 0.7],
        };
        for &x in &[-2.0, 0.4, 3.3] {
            let got = mixture_log_pdf(&[x], &m, Family::StudentT).unwrap();
            let want = log_pdf(&[x], &a, Family::StudentT).unwrap();
            assert!((got - want).abs() < 1e-14);
        }

        let b = uni(-3.0, 0.5, Some(5.0));
        let degenerate = MixtureParams {
            components: alloc::vec![a.clone(), b],
            weights: alloc::vec![1.0, 0.0],
        };
        let got = mixture_log_pdf(&[0.1], &degenerate, Family::StudentT).unwrap();
        let want = log_pdf(&[0.1], &a, Family::StudentT).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let mut rng = Rng64::seed_from(13);
        let m = MixtureParams {
            components: alloc::vec![
                uni(rng.uniform_in(-2.0, 0.0), rng.uniform_in(0.3, 1.5), Some(6.0)),
                uni(rng.uniform_in(0.0, 2.0), rng.uniform_in(0.3, 1.5), Some(6.0)),
            ],
            weights: alloc::vec![0.35, 0.65],
        };
        let f = |x: f64| mixture_log_pdf(&[x], &m, Family::StudentT).unwrap().exp();
        let out = adaptive_simpson(&f, -300.0, 300.0, 1e-7);
        assert!(out.converged);
        assert!((out.value - 1.0).abs() < 1e-3, "integral {}", out.value);
    }

    #[test]
    fn analytic_mean_reference_points() {
        let m = MixtureParams {
            components: alloc::vec![uni(1.0, 1.0, Some(3.0)), uni(-2.0, 1.0, Some(3.0))],
            weights: alloc::vec![0.3, 0.7],
        };
        let mean = analytic_mean(&m, Family::StudentT).unwrap();
        assert!((mean[0] - (-1.1)).abs() < 1e-12);

        let solo = MixtureParams {
            components: alloc::vec![uni(0.8, 2.0, Some(2.5))],
            weights: alloc::vec![1.0],
        };
        assert_eq!(analytic_mean(&solo, Family::StudentT).unwrap()[0], 0.8);
    }

    #[test]
    fn analytic_mean_rejects_heavy_dof() {
        let m = MixtureParams {
            components: alloc::vec![uni(0.0, 1.0, Some(1.0))],
            weights: alloc::vec![1.0],
        };
        assert_eq!(analytic_mean(&m, Family::StudentT), Err(DistError::MeanUndefined));
    }

    #[test]
    fn mixture_mean_matches_monte_carlo() {
        // nu > 2 so the variance is finite and the CLT bound applies.
        let mut rng = Rng64::seed_from(17);
        let m = MixtureParams {
            components: alloc::vec![uni(1.2, 0.8, Some(4.0)), uni(-0.9, 1.4, Some(4.0))],
            weights: alloc::vec![0.4, 0.6],
        };
        let analytic = analytic_mean(&m, Family::StudentT).unwrap()[0];
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let comp = if rng.uniform() < m.weights[0] { 0 } else { 1 };
            let x = sample(&mut rng, &m.components[comp], Family::StudentT)[0];
            sum += x;
            sum_sq += x * x;
        }
        let mc = sum / n as f64;
        let std = (sum_sq / n as f64 - mc * mc).sqrt();
        assert!(
            (mc - analytic).abs() <= 4.0 * std / (n as f64).sqrt(),
            "mc {mc} analytic {analytic} std {std}"
        );
    }
}
