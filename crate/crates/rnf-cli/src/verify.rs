//! Statistical conformance suite: every closed-form claim the library
//! relies on, turned into a machine-checkable pass/fail report.
//!
//! Checks are deterministic given a seed, emit their worst-case statistic
//! for regression tracking, and are sized so the heaviest (the Monte-Carlo
//! mean check) stays within a few minutes. Tolerances are separated by the
//! dominant error source: 1e-12 for algebraic identities, 1e-9 for the
//! closed-form inverse, 1e-5 for finite-difference log-determinants, 1e-4
//! for parameter gradients, 1e-3 for quadrature.

use serde::Serialize;
use statrs::distribution::ContinuousCDF;

use rnf_core::autodiff::{finite_difference_check, ParameterStore, ScalarExpr, TapedParams, Var};
use rnf_core::base::{BaseParams, Family, MixtureParams};
use rnf_core::lrs::{
    derive_hyper, forward, inverse, log_abs_det_grad, map_raw_params, mirror, validate_table,
    FlowHyper, KnotTable, TableDefect,
};
use rnf_core::policy::{Conditioner, ConditionerConfig, FlowPack, PolicyDistribution, PolicyKind};
use rnf_core::quad::adaptive_simpson;
use rnf_core::realnvp::CouplingLayer;
use rnf_core::rng::Rng64;

/// One verification check's outcome.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    fn new(name: &str, cases: usize, failures: usize, worst: f64, tolerance: f64) -> Self {
        CheckReport { name: name.into(), cases, failures, worst, tolerance, pass: failures == 0 }
    }
}

/// Bi-Lipschitz band implied by `tau`: slopes and aspect ratios must stay
/// inside `(lower, upper)` with `lower * upper = 1`.
#[derive(Clone, Copy, Debug)]
pub struct LipschitzBound {
    pub lower: f64,
    pub upper: f64,
}

impl LipschitzBound {
    pub fn from_tau(tau: f64) -> Self {
        LipschitzBound { lower: 1.0 - tau, upper: 1.0 / (1.0 - tau) }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }
}

const SWEEP_TAUS: [f64; 3] = [0.2, 0.5, 0.8];

fn random_table(rng: &mut Rng64, hyper: &FlowHyper) -> KnotTable<f64> {
    let k = hyper.half_intervals;
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.normal() * 2.0).collect() };
    let half = map_raw_params(&draw(k + 1), &draw(k), &draw(k), &draw(k), hyper)
        .expect("head lengths match");
    mirror(&half, hyper)
}

/// Spline conformance: oddness, closed-form invertibility, analytic
/// log-determinant against central differences, monotonicity, the
/// tau-bounds on slopes/ratios, and unit endpoint slopes. One report per
/// sub-check over `cases` random (tau, table, point) triples.
pub fn check_flow(seed: u64, cases: usize, inject_fault: bool) -> Vec<CheckReport> {
    let mut rng = Rng64::stream(seed, 0x10);
    let mut odd = (0usize, 0.0f64);
    let mut round = (0usize, 0.0f64);
    let mut logdet = (0usize, 0.0f64);
    let mut monotone = (0usize, 0.0f64);
    let mut bounds = (0usize, 0.0f64);
    let mut endpoint = (0usize, 0.0f64);

    let fd_step = 1e-6;
    for case in 0..cases {
        let tau = SWEEP_TAUS[case % SWEEP_TAUS.len()];
        let hyper = derive_hyper(tau).expect("tau in range");
        let c = hyper.half_width;
        let mut table = random_table(&mut rng, &hyper);
        if inject_fault && case == cases / 2 {
            // Negative control: a deliberately corrupted table must fail.
            table.base.swap(1, 2);
        }

        // Structural bounds (slopes, ratios, symmetry, monotonicity).
        let band = LipschitzBound::from_tau(tau);
        match validate_table(&table, &hyper) {
            Ok(()) => {
                let worst_slope = table
                    .slope
                    .iter()
                    .map(|&d| (d / band.upper).max(band.lower / d))
                    .fold(0.0f64, f64::max);
                bounds.1 = bounds.1.max(worst_slope);
            }
            Err(TableDefect::NotMonotoneBase { .. }) | Err(TableDefect::NotMonotoneTarget { .. }) => {
                monotone.0 += 1;
            }
            Err(_) => bounds.0 += 1,
        }

        let eps = rng.uniform_in(0.0, c);
        let odd_err = (forward(eps, &table, &hyper) + forward(-eps, &table, &hyper)).abs();
        odd.1 = odd.1.max(odd_err);
        if odd_err > 1e-12 {
            odd.0 += 1;
        }

        let eps = rng.uniform_in(-c, c);
        let round_err = (inverse(forward(eps, &table, &hyper), &table, &hyper) - eps).abs();
        round.1 = round.1.max(round_err);
        if round_err > 1e-9 {
            round.0 += 1;
        }

        // Central differences are only a valid derivative oracle away from
        // the knots (the transform is C1 but not C2 there).
        let eps = {
            let mut e = rng.uniform_in(-c + 0.01, c - 0.01);
            let q = (e + c) / (2.0 * c);
            let k = table.base.partition_point(|&b| b <= q).saturating_sub(1);
            let k = k.min(table.base.len() - 2);
            let lo = table.base[k] * 2.0 * c - c;
            let hi = table.base[k + 1] * 2.0 * c - c;
            let margin = 10.0 * fd_step;
            e = e.clamp(lo + margin, hi - margin);
            e
        };
        let analytic = log_abs_det_grad(eps, &table, &hyper);
        let cd = (forward(eps + fd_step, &table, &hyper) - forward(eps - fd_step, &table, &hyper))
            / (2.0 * fd_step);
        let rel = (analytic - cd.ln()).abs() / analytic.abs().max(1.0);
        logdet.1 = logdet.1.max(rel);
        if rel > 1e-5 {
            logdet.0 += 1;
        }

        // Monotonicity along a random ordered pair.
        let a = rng.uniform_in(-c - 1.0, c + 1.0);
        let b = a + rng.uniform_in(1e-9, 0.5);
        if !(forward(b, &table, &hyper) > forward(a, &table, &hyper)) {
            monotone.0 += 1;
        }

        // Endpoint slopes are exactly one: zero log-derivative at both ends.
        let end_err = log_abs_det_grad(c, &table, &hyper)
            .abs()
            .max(log_abs_det_grad(-c, &table, &hyper).abs());
        endpoint.1 = endpoint.1.max(end_err);
        if end_err > 1e-6 {
            endpoint.0 += 1;
        }
    }

    vec![
        CheckReport::new("flow_oddness", cases, odd.0, odd.1, 1e-12),
        CheckReport::new("flow_roundtrip", cases, round.0, round.1, 1e-9),
        CheckReport::new("flow_log_det", cases, logdet.0, logdet.1, 1e-5),
        CheckReport::new("flow_monotonicity", cases, monotone.0, monotone.1, 0.0),
        CheckReport::new("flow_tau_bounds", cases, bounds.0, bounds.1, 1.0),
        CheckReport::new("flow_endpoint_slope", cases, endpoint.0, endpoint.1, 1e-6),
    ]
}

/// A random one- to three-dimensional flowed student-t mixture built
/// through the standard head mappings, with explicit dof control.
fn random_bit_rnf(rng: &mut Rng64, dim: usize, dof_range: (f64, f64)) -> PolicyDistribution<f64> {
    let hyper = derive_hyper(0.8).expect("tau in range");
    let tables = (0..dim).map(|_| random_table(rng, &hyper)).collect();
    let dof = rng.uniform_in(dof_range.0, dof_range.1);
    let comp = |rng: &mut Rng64| BaseParams {
        loc: (0..dim).map(|_| rng.uniform_in(-2.0, 2.0)).collect(),
        scale: (0..dim).map(|_| rng.uniform_in(0.4, 1.8)).collect(),
        dof: Some(dof),
    };
    let rho = rng.uniform_in(0.15, 0.85);
    PolicyDistribution {
        kind: PolicyKind::BitRnf,
        family: Family::StudentT,
        mixture: MixtureParams {
            components: vec![comp(rng), comp(rng)],
            weights: vec![rho, 1.0 - rho],
        },
        flow: Some(FlowPack { hyper, tables }),
    }
}

/// Analytic-mean conformance: per-dimension Monte-Carlo means over `samples`
/// draws must match the closed form within four standard errors; the check
/// passes when at least 99% of cases do.
pub fn check_mean(seed: u64, cases: usize, samples: usize, inject_fault: bool) -> CheckReport {
    let mut rng = Rng64::stream(seed, 0x20);
    let mut failures = 0usize;
    let mut worst_z = 0.0f64;
    for case in 0..cases {
        let dim = 1 + case % 3;
        // dof > 2 keeps the variance finite so the CLT bound is valid.
        let dist = random_bit_rnf(&mut rng, dim, (2.5, 30.0));
        let mut analytic = dist.mean().expect("dof > 1");
        if inject_fault && case == 0 {
            analytic[0] += 0.05;
        }
        let mut sum = vec![0.0f64; dim];
        let mut sum_sq = vec![0.0f64; dim];
        for _ in 0..samples {
            let x = dist.sample(&mut rng);
            for d in 0..dim {
                sum[d] += x[d];
                sum_sq[d] += x[d] * x[d];
            }
        }
        let n = samples as f64;
        let mut case_ok = true;
        for d in 0..dim {
            let mc = sum[d] / n;
            let var = (sum_sq[d] / n - mc * mc).max(0.0);
            let se = (var / n).sqrt();
            let z = (mc - analytic[d]).abs() / se.max(1e-300);
            worst_z = worst_z.max(z);
            if z > 4.0 {
                case_ok = false;
            }
        }
        if !case_ok {
            failures += 1;
        }
    }
    // Pass rate of at least 99%.
    let allowed = cases / 100;
    CheckReport {
        name: "mean_monte_carlo".into(),
        cases,
        failures,
        worst: worst_z,
        tolerance: 4.0,
        pass: failures <= allowed,
    }
}

/// Density normalization: adaptive quadrature over `loc +- 50 scale` plus
/// the analytic student-t tail mass beyond must give 1 within 1e-3.
pub fn check_normalization(seed: u64, cases: usize, inject_fault: bool) -> CheckReport {
    let mut rng = Rng64::stream(seed, 0x30);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for case in 0..cases {
        let dist = random_bit_rnf(&mut rng, 1, (1.5, 30.0));
        let lo = dist
            .mixture
            .components
            .iter()
            .map(|c| c.loc[0] - 50.0 * c.scale[0])
            .fold(f64::INFINITY, f64::min);
        let hi = dist
            .mixture
            .components
            .iter()
            .map(|c| c.loc[0] + 50.0 * c.scale[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let pdf = |x: f64| dist.log_prob(&[x]).expect("valid point").exp();
        let quad = adaptive_simpson(&pdf, lo, hi, 1e-6);

        // Outside +-50 scales the spline is the identity, so the tail mass
        // is exactly the weighted student-t tail mass.
        let mut tail = 0.0;
        for (comp, w) in dist.mixture.components.iter().zip(&dist.mixture.weights) {
            let t = statrs::distribution::StudentsT::new(
                comp.loc[0],
                comp.scale[0],
                comp.dof.expect("student-t"),
            )
            .expect("valid parameters");
            tail += w * (t.cdf(lo) + (1.0 - t.cdf(hi)));
        }

        let mut total = quad.value + tail;
        if inject_fault && case == 0 {
            total += 0.01;
        }
        let err = (total - 1.0).abs();
        worst = worst.max(err);
        if err > 1e-3 || !quad.converged {
            failures += 1;
        }
    }
    CheckReport::new("density_normalization", cases, failures, worst, 1e-3)
}

struct PolicyLogProb {
    conditioner: Conditioner,
    state: Vec<f64>,
    action: Vec<f64>,
}

impl ScalarExpr for PolicyLogProb {
    fn eval_plain(&self, params: &ParameterStore) -> f64 {
        self.conditioner
            .forward::<f64, _>(params, &self.state)
            .expect("valid state")
            .log_prob(&self.action)
            .expect("valid action")
    }

    fn eval_taped<'t>(&self, params: &TapedParams<'t>) -> Var<'t> {
        self.conditioner
            .forward::<Var<'t>, _>(params, &self.state)
            .expect("valid state")
            .log_prob(&self.action)
            .expect("valid action")
    }
}

/// Gradient fidelity of `ln pi` through the full conditioner (trunk, layer
/// norm, flow heads, spline inverse, mixture) against central differences,
/// including actions six scales into the tail.
pub fn check_gradients(seed: u64, cases: usize, inject_fault: bool) -> CheckReport {
    let mut rng = Rng64::stream(seed, 0x40);
    let mut cfg = ConditionerConfig::desk(PolicyKind::BitRnf, 2, 1).with_tau(0.8);
    cfg.trunk_layers = 1;
    cfg.trunk_width = 32;
    cfg.flow_layers = 1;
    cfg.flow_width = 16;

    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for case in 0..cases {
        let conditioner = Conditioner::new(cfg).expect("valid config");
        let mut store = conditioner.init_store(&mut rng);
        // The flow output starts at the identity; randomize it so the
        // gradient check exercises a genuinely conditioned spline.
        for name in ["flow.out.w", "flow.out.b"] {
            let slot = store.slot(name).expect("flow head exists");
            for v in store.array_mut(slot) {
                *v += 0.4 * rng.normal();
            }
        }
        let state = vec![rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
        let dist = conditioner.forward::<f64, _>(&store, &state).expect("valid state");
        let comp = &dist.mixture.components[0];
        // Every third case probes a far-tail action at six scales.
        let action = if case % 3 == 2 {
            let sign = if case % 2 == 0 { 1.0 } else { -1.0 };
            vec![comp.loc[0] + sign * 6.0 * comp.scale[0]]
        } else {
            vec![rng.uniform_in(-2.5, 2.5)]
        };
        let expr = PolicyLogProb { conditioner, state, action };
        let report = finite_difference_check(&store, &expr, 1e-5).expect("gradcheck runs");
        let mut rel = report.max_rel_error;
        if inject_fault && case == 0 {
            rel += 1.0;
        }
        worst = worst.max(rel);
        if rel > 1e-4 {
            failures += 1;
        }
    }
    CheckReport::new("gradient_fidelity", cases, failures, worst, 1e-4)
}

/// Odd-restricted coupling layer conformance at dimension three: oddness,
/// roundtrip, and the log-determinant against a dense finite-difference
/// Jacobian.
pub fn check_realnvp(seed: u64, cases: usize, inject_fault: bool) -> Vec<CheckReport> {
    let mut rng = Rng64::stream(seed, 0x50);
    let mut odd = (0usize, 0.0f64);
    let mut round = (0usize, 0.0f64);
    let mut logdet = (0usize, 0.0f64);
    let h = 1e-5;
    for case in 0..cases {
        let layer = CouplingLayer::random(&mut rng, 3, 0.8, 8);
        let x: Vec<f64> = (0..3).map(|_| rng.uniform_in(-2.5, 2.5)).collect();
        let neg: Vec<f64> = x.iter().map(|&v| -v).collect();
        let fx = layer.forward(&x).expect("dim matches");
        let fneg = layer.forward(&neg).expect("dim matches");
        let odd_err = fx
            .iter()
            .zip(&fneg)
            .map(|(a, b)| (a + b).abs())
            .fold(0.0f64, f64::max);
        odd.1 = odd.1.max(odd_err);
        if odd_err > 1e-12 {
            odd.0 += 1;
        }

        let back = layer.inverse(&fx).expect("dim matches");
        let round_err = x
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        round.1 = round.1.max(round_err);
        if round_err > 1e-9 {
            round.0 += 1;
        }

        let mut jac = [[0.0f64; 3]; 3];
        for j in 0..3 {
            let mut up = x.clone();
            up[j] += h;
            let mut down = x.clone();
            down[j] -= h;
            let fu = layer.forward(&up).expect("dim matches");
            let fd = layer.forward(&down).expect("dim matches");
            for i in 0..3 {
                jac[i][j] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
            - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
            + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
        let mut got = layer.log_det(&x).expect("dim matches");
        if inject_fault && case == 0 {
            got += 0.01;
        }
        let rel = (got - det.abs().ln()).abs() / got.abs().max(1.0);
        logdet.1 = logdet.1.max(rel);
        if rel > 1e-4 {
            logdet.0 += 1;
        }
    }
    vec![
        CheckReport::new("coupling_oddness", cases, odd.0, odd.1, 1e-12),
        CheckReport::new("coupling_roundtrip", cases, round.0, round.1, 1e-9),
        CheckReport::new("coupling_log_det", cases, logdet.0, logdet.1, 1e-4),
    ]
}

/// Exact hyper-parameter derivation plus the squareplus-family identities
/// on dense grids.
pub fn check_tau_and_identities(inject_fault: bool) -> Vec<CheckReport> {
    use rnf_core::nonlin::{squaremax, squaresign, squmoid, Smoothness};

    let mut reports = Vec::new();

    let h = derive_hyper(0.8).expect("tau in range");
    let exact = h.half_intervals == 16 && h.half_width == 4.0;
    reports.push(CheckReport::new(
        "tau_hyper_exact",
        1,
        usize::from(!exact || inject_fault),
        if exact { 0.0 } else { 1.0 },
        0.0,
    ));

    let b = Smoothness::DEFAULT;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..=4000 {
        let x = -20.0 + 0.01 * i as f64;
        // squareplus' == squmoid through the gradient engine.
        let tape = rnf_core::autodiff::Tape::new();
        let leaf = tape.leaf(x);
        let out = rnf_core::nonlin::squareplus(leaf, b);
        let grad = rnf_core::autodiff::adjoints(out).of(leaf);
        let err = (grad - squmoid(x, b)).abs();
        // squaresign == 2 squmoid(2x) - 1.
        let err2 = (squaresign(x, b) - (2.0 * squmoid(2.0 * x, b) - 1.0)).abs();
        worst = worst.max(err).max(err2);
        if err > 1e-12 || err2 > 1e-12 {
            failures += 1;
        }
    }
    let mut rng = Rng64::seed_from(3);
    for _ in 0..200 {
        let v: Vec<f64> = (0..6).map(|_| rng.uniform_in(-10.0, 10.0)).collect();
        let w = squaremax(&v, b).expect("non-empty");
        let err = (w.iter().sum::<f64>() - 1.0).abs();
        worst = worst.max(err);
        if err > 1e-12 {
            failures += 1;
        }
    }
    if inject_fault {
        failures += 1;
    }
    reports.push(CheckReport::new("scalar_identities", 4201 + 200, failures, worst, 1e-12));
    reports
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    All,
    Flow,
    Mean,
    Norm,
    Grad,
}

/// Run a suite with the conformance-sized sweeps (the mean check is the
/// slow one: 100 cases of a million draws each).
pub fn run_suite(suite: Suite, seed: u64, inject_fault: bool) -> Vec<CheckReport> {
    let mut reports = Vec::new();
    match suite {
        Suite::Flow => {
            reports.extend(check_flow(seed, 10_000, inject_fault));
            reports.extend(check_realnvp(seed, 1_000, inject_fault));
            reports.extend(check_tau_and_identities(inject_fault));
        }
        Suite::Mean => reports.push(check_mean(seed, 100, 1_000_000, inject_fault)),
        Suite::Norm => reports.push(check_normalization(seed, 100, inject_fault)),
        Suite::Grad => reports.push(check_gradients(seed, 20, inject_fault)),
        Suite::All => {
            reports.extend(run_suite(Suite::Flow, seed, inject_fault));
            reports.extend(run_suite(Suite::Norm, seed, inject_fault));
            reports.extend(run_suite(Suite::Grad, seed, inject_fault));
            reports.extend(run_suite(Suite::Mean, seed, inject_fault));
        }
    }
    reports
}
