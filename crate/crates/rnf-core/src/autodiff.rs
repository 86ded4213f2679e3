//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] records one node per primitive operation; [`Var`] is a cheap
//! handle (tape pointer, node index, cached value) implementing
//! [`Scalar`](crate::scalar::Scalar), so any generic numeric routine in this
//! crate can be differentiated by running it on `Var` instead of `f64`.
//! Nodes store only parent indices and local partials; a backward sweep in
//! recording order accumulates adjoints.
//!
//! Parameter counts here are a few thousand, so a scalar tape is simple and
//! fast enough; the deployment path never records (it runs the same code on
//! `f64`).
//!
//! Data-dependent branches (spline interval lookup, mixture component
//! comparisons) read `Var::raw` and are treated as constants, consistent
//! with differentiating a piecewise-smooth function on the taken piece.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Scalar;
use crate::special;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Domain violations caught while recording (e.g. `ln` of a non-positive
/// value). The node index identifies the offending subexpression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DomainFault {
    pub node: u32,
    pub kind: FaultKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultKind {
    LogNonPositive,
    SqrtNegative,
    LnGammaNonPositive,
}

impl core::fmt::Display for DomainFault {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let what = match self.kind {
            FaultKind::LogNonPositive => "ln of a non-positive value",
            FaultKind::SqrtNegative => "sqrt of a negative value",
            FaultKind::LnGammaNonPositive => "ln_gamma of a non-positive value",
        };
        write!(f, "{} at tape node {}", what, self.node)
    }
}

/// Recording tape. Confined to one logical thread; independent tapes may run
/// concurrently.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    faults: RefCell<Vec<DomainFault>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            faults: RefCell::new(Vec::new()),
        }
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
            faults: RefCell::new(Vec::new()),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    fn push(&self, parents: [u32; 2], partials: [f64; 2], value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node { parents, partials });
        Var { tape: self, index, value }
    }

    /// A differentiable input node.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node { parents: [index, index], partials: [0.0, 0.0] });
        Var { tape: self, index, value }
    }

    /// A constant node (identical structure to a leaf; named for intent).
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.leaf(value)
    }

    fn fault(&self, node: u32, kind: FaultKind) {
        self.faults.borrow_mut().push(DomainFault { node, kind });
    }

    /// Record an expression, failing if any primitive hit a domain fault.
    /// The forward value of the recorded expression equals plain evaluation
    /// bit for bit (same code, same operation order).
    pub fn record<R, F>(&self, build: F) -> Result<R, DomainFault>
    where
        F: FnOnce() -> R,
    {
        let mark = self.faults.borrow().len();
        let out = build();
        let faults = self.faults.borrow();
        match faults.get(mark) {
            Some(&fault) => Err(fault),
            None => Ok(out),
        }
    }
}

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.value
    }

    pub fn index(self) -> u32 {
        self.index
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.push([self.index, rhs.index], [1.0, 1.0], self.value + rhs.value)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.push([self.index, rhs.index], [1.0, -1.0], self.value - rhs.value)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.push(
            [self.index, rhs.index],
            [rhs.value, self.value],
            self.value * rhs.value,
        )
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.value;
        self.tape.push(
            [self.index, rhs.index],
            [inv, -self.value * inv * inv],
            self.value / rhs.value,
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.push([self.index, self.index], [-1.0, 0.0], -self.value)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.tape.push([self.index, self.index], [1.0, 0.0], self.value + rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.tape.push([self.index, self.index], [1.0, 0.0], self.value - rhs)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.tape.push([self.index, self.index], [rhs, 0.0], self.value * rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.tape.push([self.index, self.index], [1.0 / rhs, 0.0], self.value / rhs)
    }
}

impl<'t> Scalar for Var<'t> {
    fn raw(self) -> f64 {
        self.value
    }

    fn lift(self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn rsub(self, minuend: f64) -> Self {
        self.tape.push([self.index, self.index], [-1.0, 0.0], minuend - self.value)
    }

    fn rdiv(self, numerator: f64) -> Self {
        let value = numerator / self.value;
        self.tape.push(
            [self.index, self.index],
            [-value / self.value, 0.0],
            value,
        )
    }

    fn sqrt(self) -> Self {
        if self.value < 0.0 {
            self.tape.fault(self.index, FaultKind::SqrtNegative);
        }
        let value = libm::sqrt(self.value);
        self.tape.push([self.index, self.index], [0.5 / value, 0.0], value)
    }

    fn ln(self) -> Self {
        if self.value <= 0.0 {
            self.tape.fault(self.index, FaultKind::LogNonPositive);
        }
        self.tape.push(
            [self.index, self.index],
            [1.0 / self.value, 0.0],
            libm::log(self.value),
        )
    }

    fn exp(self) -> Self {
        let value = libm::exp(self.value);
        self.tape.push([self.index, self.index], [value, 0.0], value)
    }

    fn abs(self) -> Self {
        let sign = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.tape.push([self.index, self.index], [sign, 0.0], f64::abs(self.value))
    }

    fn powf(self, exponent: f64) -> Self {
        let value = libm::pow(self.value, exponent);
        let partial = exponent * libm::pow(self.value, exponent - 1.0);
        self.tape.push([self.index, self.index], [partial, 0.0], value)
    }

    fn ln_gamma(self) -> Self {
        if self.value <= 0.0 {
            self.tape.fault(self.index, FaultKind::LnGammaNonPositive);
        }
        self.tape.push(
            [self.index, self.index],
            [special::digamma(self.value.max(f64::MIN_POSITIVE)), 0.0],
            special::ln_gamma(self.value),
        )
    }
}

/// Adjoint of every node with respect to a root, from one backward sweep.
pub struct Adjoints {
    values: Vec<f64>,
}

impl Adjoints {
    pub fn of(&self, v: Var<'_>) -> f64 {
        self.values[v.index as usize]
    }
}

/// Backward sweep from `root` (which must be scalar — it is).
///
/// Nodes whose adjoint is exactly zero are skipped, both as an optimization
/// and so that unused subexpressions with infinite local partials cannot
/// poison the sweep with `0 * inf`.
pub fn adjoints(root: Var<'_>) -> Adjoints {
    let nodes = root.tape.nodes.borrow();
    let mut values = vec![0.0; nodes.len()];
    values[root.index as usize] = 1.0;
    for i in (0..=root.index as usize).rev() {
        let a = values[i];
        if a == 0.0 {
            continue;
        }
        let node = nodes[i];
        let p0 = node.parents[0] as usize;
        let p1 = node.parents[1] as usize;
        if p0 != i {
            values[p0] += a * node.partials[0];
        }
        if p1 != i && node.partials[1] != 0.0 {
            values[p1] += a * node.partials[1];
        }
    }
    Adjoints { values }
}

/// Named arrays of trainable values. Names are unique; shapes are fixed
/// after insertion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    arrays: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StoreError {
    DuplicateName(String),
    UnknownName(String),
}

impl core::fmt::Display for StoreError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StoreError::DuplicateName(n) => write!(f, "duplicate parameter name '{n}'"),
            StoreError::UnknownName(n) => write!(f, "unknown parameter name '{n}'"),
        }
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, values: Vec<f64>) -> Result<usize, StoreError> {
        if self.names.iter().any(|n| n == name) {
            return Err(StoreError::DuplicateName(String::from(name)));
        }
        self.names.push(String::from(name));
        self.arrays.push(values);
        Ok(self.arrays.len() - 1)
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn slot_count(&self) -> usize {
        self.arrays.len()
    }

    pub fn name(&self, slot: usize) -> &str {
        &self.names[slot]
    }

    pub fn array(&self, slot: usize) -> &[f64] {
        &self.arrays[slot]
    }

    pub fn array_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.arrays[slot]
    }

    pub fn total_len(&self) -> usize {
        self.arrays.iter().map(|a| a.len()).sum()
    }

    /// Inject every parameter as a leaf on `tape`, in slot order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> TapedParams<'t> {
        let vars = self
            .arrays
            .iter()
            .map(|a| a.iter().map(|&v| tape.leaf(v)).collect())
            .collect();
        TapedParams { tape, vars }
    }
}

/// Tape leaves mirroring a [`ParameterStore`].
pub struct TapedParams<'t> {
    tape: &'t Tape,
    vars: Vec<Vec<Var<'t>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradError {
    /// Slot/offset of the parameter whose gradient came out non-finite,
    /// plus its tape node for provenance.
    pub slot: usize,
    pub offset: usize,
    pub node: u32,
}

impl core::fmt::Display for GradError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "non-finite gradient for parameter slot {} offset {} (tape node {})",
            self.slot, self.offset, self.node
        )
    }
}

impl<'t> TapedParams<'t> {
    pub fn array(&self, slot: usize) -> &[Var<'t>] {
        &self.vars[slot]
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Extract this store's gradients from a finished adjoint sweep.
    /// Parameters the root never touched get zero.
    pub fn gradients(&self, adjoints: &Adjoints) -> Result<GradientMap, GradError> {
        let mut arrays = Vec::with_capacity(self.vars.len());
        for (slot, vars) in self.vars.iter().enumerate() {
            let mut grads = Vec::with_capacity(vars.len());
            for (offset, var) in vars.iter().enumerate() {
                let g = adjoints.values[var.index as usize];
                if !g.is_finite() {
                    return Err(GradError { slot, offset, node: var.index });
                }
                grads.push(g);
            }
            arrays.push(grads);
        }
        Ok(GradientMap { arrays })
    }
}

/// Gradients aligned slot-for-slot with the originating [`ParameterStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    arrays: Vec<Vec<f64>>,
}

impl GradientMap {
    pub fn array(&self, slot: usize) -> &[f64] {
        &self.arrays[slot]
    }

    pub fn slot_count(&self) -> usize {
        self.arrays.len()
    }
}

/// One-call wrapper: sweep from `root` and collect the gradient map for
/// `params`.
pub fn backpropagate<'t>(
    root: Var<'t>,
    params: &TapedParams<'t>,
) -> Result<GradientMap, GradError> {
    params.gradients(&adjoints(root))
}

/// A scalar function of a [`ParameterStore`] that can run both plain and
/// taped, for gradient verification.
pub trait ScalarExpr {
    fn eval_plain(&self, params: &ParameterStore) -> f64;
    fn eval_taped<'t>(&self, params: &TapedParams<'t>) -> Var<'t>;
}

/// Outcome of a finite-difference gradient check.
#[derive(Clone, Copy, Debug)]
pub struct FdReport {
    /// max over parameters of |analytic - central| / max(1, |analytic|).
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a perturbed evaluation went non-finite.
    pub skipped_nonfinite: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FdError {
    InvalidStep(f64),
    Fault(DomainFault),
    Gradient(GradError),
}

impl core::fmt::Display for FdError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FdError::InvalidStep(h) => write!(f, "finite-difference step must be positive, got {h}"),
            FdError::Fault(d) => write!(f, "domain fault while recording: {d}"),
            FdError::Gradient(g) => write!(f, "{g}"),
        }
    }
}

/// Compare the taped gradient of `expr` against central differences over
/// every entry of `store`.
pub fn finite_difference_check(
    store: &ParameterStore,
    expr: &dyn ScalarExpr,
    step: f64,
) -> Result<FdReport, FdError> {
    if !(step > 0.0) {
        return Err(FdError::InvalidStep(step));
    }
    let tape = Tape::new();
    let taped = store.bind(&tape);
    let root = tape.record(|| expr.eval_taped(&taped)).map_err(FdError::Fault)?;
    let grads = taped.gradients(&adjoints(root)).map_err(FdError::Gradient)?;

    let mut work = store.clone();
    let mut max_rel = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    for slot in 0..store.slot_count() {
        for i in 0..store.array(slot).len() {
            let original = store.array(slot)[i];
            work.array_mut(slot)[i] = original + step;
            let up = expr.eval_plain(&work);
            work.array_mut(slot)[i] = original - step;
            let down = expr.eval_plain(&work);
            work.array_mut(slot)[i] = original;
            if !up.is_finite() || !down.is_finite() {
                skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads.array(slot)[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        }
    }
    Ok(FdReport { max_rel_error: max_rel, checked, skipped_nonfinite: skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::{squareplus, Smoothness};

    #[test]
    fn product_rule_partials() {
        let tape = Tape::new();
        let x = tape.leaf(3.0);
        let y = tape.leaf(4.0);
        let z = x * y;
        assert_eq!(z.value(), 12.0);
        let adj = adjoints(z);
        assert_eq!(adj.of(x), 4.0);
        assert_eq!(adj.of(y), 3.0);
    }

    #[test]
    fn identity_root_gradient() {
        let tape = Tape::new();
        let a = tape.leaf(5.0);
        let b = tape.leaf(7.0);
        let adj = adjoints(a);
        assert_eq!(adj.of(a), 1.0);
        assert_eq!(adj.of(b), 0.0);
    }

    #[test]
    fn squareplus_gradient_at_zero_is_half() {
        let tape = Tape::new();
        let x = tape.leaf(0.0);
        let y = squareplus(x, Smoothness::DEFAULT);
        assert_eq!(y.value(), 1.0);
        let adj = adjoints(y);
        assert_eq!(adj.of(x), 0.5);
    }

    #[test]
    fn taped_forward_matches_plain_bitwise() {
        // The same generic expression on f64 and on Var.
        fn expr<S: crate::Scalar>(a: S, b: S) -> S {
            let s = squareplus(a * b + 0.25, Smoothness::DEFAULT);
            (s.ln() + a.exp() * 0.5 - b.sqrt()).abs()
        }
        let plain = expr(0.7f64, 2.3f64);
        let tape = Tape::new();
        let out = expr(tape.leaf(0.7), tape.leaf(2.3));
        assert_eq!(out.value().to_bits(), plain.to_bits());
    }

    #[test]
    fn log_of_nonpositive_reports_the_node() {
        let tape = Tape::new();
        let x = tape.leaf(-2.0);
        let result = tape.record(|| x.ln());
        let fault = result.err().expect("must fault");
        assert_eq!(fault.kind, FaultKind::LogNonPositive);
        assert_eq!(fault.node, x.index());
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let mut rng = crate::rng::Rng64::seed_from(11);
        for _ in 0..50 {
            let a = rng.uniform_in(0.1, 3.0);
            let b = rng.uniform_in(0.1, 3.0);

            let grad_of = |f: &dyn for<'a> Fn(Var<'a>, Var<'a>) -> Var<'a>| -> (f64, f64) {
                let tape = Tape::new();
                let x = tape.leaf(a);
                let y = tape.leaf(b);
                let adj = adjoints(f(x, y));
                (adj.of(x), adj.of(y))
            };
            let g1 = grad_of(&|x, y| x * y + x.sqrt());
            let g2 = grad_of(&|x, y| y.ln() * 2.0 - x);
            let gsum = grad_of(&|x, y| (x * y + x.sqrt()) + (y.ln() * 2.0 - x));
            assert!((gsum.0 - (g1.0 + g2.0)).abs() < 1e-12);
            assert!((gsum.1 - (g1.1 + g2.1)).abs() < 1e-12);
        }
    }

    #[test]
    fn replaying_a_seeded_expression_is_bit_reproducible() {
        let run = || {
            let mut rng = crate::rng::Rng64::seed_from(99);
            let tape = Tape::new();
            let mut store = ParameterStore::new();
            store
                .add("w", (0..8).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
                .unwrap();
            let taped = store.bind(&tape);
            let mut acc = taped.array(0)[0];
            for &v in &taped.array(0)[1..] {
                acc = acc * v + squareplus(v, Smoothness::DEFAULT);
            }
            let grads = backpropagate(acc, &taped).unwrap();
            (acc.value(), grads.array(0).to_vec())
        };
        let (v1, g1) = run();
        let (v2, g2) = run();
        assert_eq!(v1.to_bits(), v2.to_bits());
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn unused_parameters_get_zero_gradient() {
        let tape = Tape::new();
        let mut store = ParameterStore::new();
        store.add("used", vec![2.0]).unwrap();
        store.add("unused", vec![5.0, 6.0]).unwrap();
        let taped = store.bind(&tape);
        let root = taped.array(0)[0] * 3.0;
        let grads = backpropagate(root, &taped).unwrap();
        assert_eq!(grads.array(0), &[3.0]);
        assert_eq!(grads.array(1), &[0.0, 0.0]);
    }

    #[test]
    fn nonfinite_gradient_is_reported_with_provenance() {
        let tape = Tape::new();
        let mut store = ParameterStore::new();
        store.add("p", vec![0.0]).unwrap();
        let taped = store.bind(&tape);
        let x = taped.array(0)[0];
        // d/dx sqrt(x) at 0 is infinite.
        let root = x.sqrt();
        let err = backpropagate(root, &taped).unwrap_err();
        assert_eq!(err.slot, 0);
        assert_eq!(err.offset, 0);
    }

    struct Square;
    impl ScalarExpr for Square {
        fn eval_plain(&self, p: &ParameterStore) -> f64 {
            let x = p.array(0)[0];
            x * x
        }
        fn eval_taped<'t>(&self, p: &TapedParams<'t>) -> Var<'t> {
            let x = p.array(0)[0];
            x * x
        }
    }

    #[test]
    fn fd_check_quadratic_is_exact_to_roundoff() {
        let mut store = ParameterStore::new();
        store.add("theta", vec![3.0]).unwrap();
        let report = finite_difference_check(&store, &Square, 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-8, "rel {}", report.max_rel_error);
        assert_eq!(report.checked, 1);
    }

    struct Constant;
    impl ScalarExpr for Constant {
        fn eval_plain(&self, _p: &ParameterStore) -> f64 {
            4.25
        }
        fn eval_taped<'t>(&self, p: &TapedParams<'t>) -> Var<'t> {
            p.tape().constant(4.25)
        }
    }

    #[test]
    fn fd_check_constant_has_zero_error() {
        let mut store = ParameterStore::new();
        store.add("theta", vec![1.0, -2.0]).unwrap();
        let report = finite_difference_check(&store, &Constant, 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    struct StudentLogPdf {
        x: f64,
    }
    impl StudentLogPdf {
        fn eval<S: crate::Scalar>(&self, mu: S, sigma_raw: S, nu_raw: S) -> S {
            // location / squareplus scale / shifted-softplus dof, so all
            // three raw parameters are unconstrained.
            let sigma = squareplus(sigma_raw, Smoothness::DEFAULT);
            let nu = squareplus(nu_raw, Smoothness::DEFAULT) + 1.0;
            let e = (mu.rsub(self.x)) / sigma;
            let half = (nu + 1.0) * 0.5;
            half.ln_gamma()
                - (nu * 0.5).ln_gamma()
                - (nu.ln() + core::f64::consts::PI.ln()) * 0.5
                - sigma.ln()
                - half * (e * e / nu + 1.0).ln()
        }
    }
    impl ScalarExpr for StudentLogPdf {
        fn eval_plain(&self, p: &ParameterStore) -> f64 {
            self.eval(p.array(0)[0], p.array(0)[1], p.array(0)[2])
        }
        fn eval_taped<'t>(&self, p: &TapedParams<'t>) -> Var<'t> {
            self.eval(p.array(0)[0], p.array(0)[1], p.array(0)[2])
        }
    }

    #[test]
    fn fd_check_student_log_pdf() {
        let mut store = ParameterStore::new();
        store.add("theta", vec![0.4, 0.3, 1.1]).unwrap();
        let expr = StudentLogPdf { x: 1.9 };
        let report = finite_difference_check(&store, &expr, 1e-5).unwrap();
        assert!(report.max_rel_error <= 1e-4, "rel {}", report.max_rel_error);
        assert_eq!(report.skipped_nonfinite, 0);
    }

    #[test]
    fn duplicate_parameter_names_are_rejected() {
        let mut store = ParameterStore::new();
        store.add("w", vec![1.0]).unwrap();
        assert!(matches!(store.add("w", vec![2.0]), Err(StoreError::DuplicateName(_))));
    }
}
