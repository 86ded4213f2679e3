//! State-conditioned composite policies.
//!
//! A [`Conditioner`] maps a state through a feedforward trunk (dense +
//! layer norm + squish) to the raw parameter heads of one of six
//! distribution kinds, then through the domain mappings ([`map_scale`],
//! [`map_dof`], [`map_weights`], [`crate::lrs::map_raw_params`]) to a
//! concrete [`PolicyDistribution`]:
//!
//! - `Normal`, `Student`: plain diagonal bases,
//! - `Gmm(n)`: a normal mixture,
//! - `Bit`: a two-component student-t mixture,
//! - `Rnf`: a normal base pushed through the odd spline flow,
//! - `BitRnf`: the flagship — a two-component student-t base whose first
//!   component is pushed through the flow, restoring asymmetry and heavy
//!   tails while the mean stays the weight-averaged component locations.
//!
//! Flow heads feed a small subnet (dense + squaresign) whose output is
//! sliced into per-dimension raw spline parameters. Everything is generic
//! over the scalar type, so the same code runs plain for rollout/deployment
//! and taped for gradients. The mean never evaluates the flow: it is `O(D)`
//! and bitwise independent of every flow-head parameter.

use alloc::vec::Vec;

use crate::autodiff::ParameterStore;
use crate::base::{
    analytic_mean, log_sum_exp, map_dof, map_scale, map_weights, mixture_log_pdf, std_log_pdf,
    BaseParams, DistError, Family, MixtureParams, WeightKind,
};
use crate::lrs::{
    derive_hyper, forward as flow_forward, inverse as flow_inverse, log_abs_det_grad,
    map_raw_params, mirror, FlowError, FlowHyper, KnotTable,
};
use crate::nn::{
    affine, affine_data, init_store, layer_norm, zeroed_store, AffineSpec, NetBuilder, NormSpec,
    ParamDef, ParamSource,
};
use crate::nonlin::{squaresign, squish, Smoothness};
use crate::rng::Rng64;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    Normal,
    Student,
    Gmm(usize),
    Bit,
    Rnf,
    BitRnf,
}

impl PolicyKind {
    pub fn uses_flow(self) -> bool {
        matches!(self, PolicyKind::Rnf | PolicyKind::BitRnf)
    }

    pub fn family(self) -> Family {
        match self {
            PolicyKind::Normal | PolicyKind::Gmm(_) | PolicyKind::Rnf => Family::Normal,
            PolicyKind::Student | PolicyKind::Bit | PolicyKind::BitRnf => Family::StudentT,
        }
    }

    pub fn component_count(self) -> usize {
        match self {
            PolicyKind::Normal | PolicyKind::Student | PolicyKind::Rnf => 1,
            PolicyKind::Bit | PolicyKind::BitRnf => 2,
            PolicyKind::Gmm(n) => n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionerConfig {
    pub kind: PolicyKind,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Stability knob for the flow kinds; ignored otherwise.
    pub tau: Option<f64>,
    pub trunk_layers: usize,
    pub trunk_width: usize,
    pub flow_layers: usize,
    pub flow_width: usize,
    /// Initial separation of mixture components: location-head biases start
    /// at `+loc_spread` for the first component and `-loc_spread` for the
    /// alternate (evenly spaced across `[-s, s]` for larger mixtures).
    /// Separated starts are what let a mixture keep both reward modes
    /// covered instead of collapsing onto whichever is found first.
    pub loc_spread: f64,
    /// Initial bias of the primary scale head (the flow-carrying component
    /// for the two-component kinds), shifting its starting scale away from
    /// `squareplus(0) = 1`. The alternate component keeps the default, so a
    /// negative bias starts the expressive component focused and the
    /// fallback broad.
    pub scale_bias: f64,
    /// Initial bias of the mixture-weight head. For the two-component kinds
    /// a positive value starts the flow-carrying component dominant
    /// (`rho = squmoid(weight_bias)`), keeping the plain component as a
    /// small fallback instead of an equal competitor.
    pub weight_bias: f64,
}

impl ConditionerConfig {
    /// Desk-scale default: 2x64 trunk, 2x32 flow head.
    pub fn desk(kind: PolicyKind, state_dim: usize, action_dim: usize) -> Self {
        ConditionerConfig {
            kind,
            state_dim,
            action_dim,
            tau: None,
            trunk_layers: 2,
            trunk_width: 64,
            flow_layers: 2,
            flow_width: 32,
            loc_spread: 0.0,
            scale_bias: 0.0,
            weight_bias: 0.0,
        }
    }

    /// Full-size trunk (5x100) with the 2x32 flow head.
    pub fn paper_shapes(mut self) -> Self {
        self.trunk_layers = 5;
        self.trunk_width = 100;
        self.flow_layers = 2;
        self.flow_width = 32;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyError {
    NonFiniteState,
    DimMismatch { expected: usize, got: usize },
    BadConfig(&'static str),
    BadGrid(&'static str),
    Flow(FlowError),
    Dist(DistError),
}

impl core::fmt::Display for PolicyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PolicyError::NonFiniteState => write!(f, "state contains non-finite entries"),
            PolicyError::DimMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            PolicyError::BadConfig(msg) => write!(f, "bad policy config: {msg}"),
            PolicyError::BadGrid(msg) => write!(f, "bad density grid: {msg}"),
            PolicyError::Flow(e) => write!(f, "{e}"),
            PolicyError::Dist(e) => write!(f, "{e}"),
        }
    }
}

impl From<FlowError> for PolicyError {
    fn from(e: FlowError) -> Self {
        PolicyError::Flow(e)
    }
}

impl From<DistError> for PolicyError {
    fn from(e: DistError) -> Self {
        PolicyError::Dist(e)
    }
}

/// Flow attachment: one knot table per action dimension, applied to the
/// first mixture component.
#[derive(Clone, Debug)]
pub struct FlowPack<S> {
    pub hyper: FlowHyper,
    pub tables: Vec<KnotTable<S>>,
}

/// A concrete state-conditioned distribution over actions.
#[derive(Clone, Debug)]
pub struct PolicyDistribution<S> {
    pub kind: PolicyKind,
    pub family: Family,
    pub mixture: MixtureParams<S>,
    pub flow: Option<FlowPack<S>>,
}

impl<S: Scalar> PolicyDistribution<S> {
    pub fn action_dim(&self) -> usize {
        self.mixture.components[0].dim()
    }

    /// Log-density of `action`, differentiable w.r.t. every distribution
    /// parameter. The flow component is evaluated through the inverse path:
    /// standardize, invert the spline, and charge the scale and the spline
    /// log-derivative.
    pub fn log_prob(&self, action: &[f64]) -> Result<S, PolicyError> {
        Ok(log_sum_exp(&self.weighted_log_terms(action)?))
    }

    /// Per-component `ln(weight) + ln(density)` plus the total; the pieces
    /// the density exports are built from.
    pub fn log_prob_parts(&self, action: &[f64]) -> Result<(S, Vec<S>), PolicyError> {
        let terms = self.weighted_log_terms(action)?;
        Ok((log_sum_exp(&terms), terms))
    }

    fn weighted_log_terms(&self, action: &[f64]) -> Result<Vec<S>, PolicyError> {
        if action.len() != self.action_dim() {
            return Err(PolicyError::DimMismatch {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        let mut terms = Vec::with_capacity(self.mixture.components.len());
        for (idx, (comp, &w)) in
            self.mixture.components.iter().zip(&self.mixture.weights).enumerate()
        {
            if w.raw() == 0.0 {
                continue;
            }
            let lp = self.component_log_density(idx, comp, action)?;
            if w.raw() == 1.0 {
                return Ok(alloc::vec![lp]);
            }
            terms.push(w.ln() + lp);
        }
        if terms.is_empty() {
            return Err(PolicyError::Dist(DistError::BadMixture));
        }
        Ok(terms)
    }

    fn component_log_density(
        &self,
        idx: usize,
        comp: &BaseParams<S>,
        action: &[f64],
    ) -> Result<S, PolicyError> {
        match &self.flow {
            Some(pack) if idx == 0 => {
                let mut total: Option<S> = None;
                for d in 0..comp.dim() {
                    let sigma = comp.scale[d];
                    if !(sigma.raw() > 0.0) {
                        return Err(PolicyError::Dist(DistError::InvalidScale));
                    }
                    let eps_t = (comp.loc[d].rsub(action[d])) / sigma;
                    let eps_b = flow_inverse(eps_t, &pack.tables[d], &pack.hyper);
                    let term = std_log_pdf(eps_b, comp.dof, self.family)?
                        - sigma.ln()
                        - log_abs_det_grad(eps_b, &pack.tables[d], &pack.hyper);
                    total = Some(match total {
                        None => term,
                        Some(acc) => acc + term,
                    });
                }
                Ok(total.expect("dim >= 1"))
            }
            _ => Ok(crate::base::log_pdf(action, comp, self.family)?),
        }
    }

    /// The analytic mean: the weighted average of component locations.
    /// Costs `O(D)` and never touches the flow parameters.
    pub fn mean(&self) -> Result<Vec<S>, PolicyError> {
        Ok(analytic_mean(&self.mixture, self.family)?)
    }
}

impl PolicyDistribution<f64> {
    /// Draw one action. Consumes one uniform for the component choice when
    /// the mixture has several components, then one standardized residual
    /// per dimension; the first component's residuals pass through the flow.
    pub fn sample(&self, rng: &mut Rng64) -> Vec<f64> {
        let idx = if self.mixture.components.len() == 1 {
            0
        } else {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut chosen = self.mixture.components.len() - 1;
            for (i, &w) in self.mixture.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        let comp = &self.mixture.components[idx];
        (0..comp.dim())
            .map(|d| {
                let eps = match self.family {
                    Family::Normal => rng.normal(),
                    Family::StudentT => rng.student_t(comp.dof.expect("student-t has dof")),
                };
                let eps = match &self.flow {
                    Some(pack) if idx == 0 => flow_forward(eps, &pack.tables[d], &pack.hyper),
                    _ => eps,
                };
                comp.loc[d] + comp.scale[d] * eps
            })
            .collect()
    }

    /// Density slice along `dim` with the other coordinates held at the
    /// mean: `n` evenly spaced points over `[lo, hi]` with their pdf.
    pub fn density_grid(
        &self,
        dim: usize,
        lo: f64,
        hi: f64,
        n: usize,
    ) -> Result<Vec<(f64, f64)>, PolicyError> {
        if dim >= self.action_dim() {
            return Err(PolicyError::BadGrid("dimension index out of range"));
        }
        if n < 2 {
            return Err(PolicyError::BadGrid("need at least two grid points"));
        }
        if !(lo < hi) {
            return Err(PolicyError::BadGrid("lower bound must be below upper bound"));
        }
        let mut action = self.mean()?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let a = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            action[dim] = a;
            out.push((a, self.log_prob(&action)?.exp()));
        }
        Ok(out)
    }
}

struct Heads {
    loc: AffineSpec,
    scale: AffineSpec,
    alt_loc: Option<AffineSpec>,
    alt_scale: Option<AffineSpec>,
    dof: Option<AffineSpec>,
    weight: Option<AffineSpec>,
    flow_hidden: Vec<AffineSpec>,
    flow_out: Option<AffineSpec>,
}

/// The conditioner network: owns the parameter manifest and evaluates
/// states into [`PolicyDistribution`]s against any parameter source.
pub struct Conditioner {
    cfg: ConditionerConfig,
    defs: Vec<ParamDef>,
    trunk: Vec<(AffineSpec, NormSpec)>,
    heads: Heads,
    hyper: Option<FlowHyper>,
}

impl Conditioner {
    pub fn new(cfg: ConditionerConfig) -> Result<Self, PolicyError> {
        if cfg.state_dim == 0 || cfg.action_dim == 0 {
            return Err(PolicyError::BadConfig("state and action dimensions must be positive"));
        }
        if cfg.trunk_layers > 0 && cfg.trunk_width == 0 {
            return Err(PolicyError::BadConfig("trunk width must be positive"));
        }
        if let PolicyKind::Gmm(n) = cfg.kind {
            if n < 2 {
                return Err(PolicyError::BadConfig("a mixture needs at least two components"));
            }
        }
        let hyper = if cfg.kind.uses_flow() {
            let tau = cfg.tau.ok_or(PolicyError::BadConfig("flow kinds require tau"))?;
            Some(derive_hyper(tau)?)
        } else {
            None
        };

        let mut b = NetBuilder::new();
        let mut trunk = Vec::with_capacity(cfg.trunk_layers);
        let mut width = cfg.state_dim;
        for layer in 0..cfg.trunk_layers {
            let aff = b.affine(&alloc::format!("trunk{layer}"), width, cfg.trunk_width);
            let norm = b.norm(&alloc::format!("trunk{layer}.ln"), cfg.trunk_width);
            trunk.push((aff, norm));
            width = cfg.trunk_width;
        }

        let d = cfg.action_dim;
        let comp_count = cfg.kind.component_count();
        let loc_width = if matches!(cfg.kind, PolicyKind::Gmm(_)) { comp_count * d } else { d };
        let loc = b.affine("head.loc", width, loc_width);
        let scale = b.affine("head.scale", width, loc_width);
        let (alt_loc, alt_scale) = match cfg.kind {
            PolicyKind::Bit | PolicyKind::BitRnf => (
                Some(b.affine("head.alt_loc", width, d)),
                Some(b.affine("head.alt_scale", width, d)),
            ),
            _ => (None, None),
        };
        let dof = match cfg.kind {
            PolicyKind::Student | PolicyKind::Bit | PolicyKind::BitRnf => {
                Some(b.affine("head.dof", width, 1))
            }
            _ => None,
        };
        let weight = match cfg.kind {
            PolicyKind::Gmm(n) => Some(b.affine("head.weight", width, n)),
            PolicyKind::Bit | PolicyKind::BitRnf => Some(b.affine("head.weight", width, 1)),
            _ => None,
        };
        let (flow_hidden, flow_out) = if let Some(h) = &hyper {
            let mut specs = Vec::with_capacity(cfg.flow_layers);
            let mut fw = width;
            for layer in 0..cfg.flow_layers {
                specs.push(b.affine(&alloc::format!("flow{layer}"), fw, cfg.flow_width));
                fw = cfg.flow_width;
            }
            let raw_per_dim = 4 * h.half_intervals + 1;
            // Zero-initialized so the spline starts as the exact identity:
            // the flow then only departs from it where the objective pays.
            (specs, Some(b.affine_zeroed("flow.out", fw, raw_per_dim * d)))
        } else {
            (Vec::new(), None)
        };

        Ok(Conditioner {
            cfg,
            defs: b.finish(),
            trunk,
            heads: Heads { loc, scale, alt_loc, alt_scale, dof, weight, flow_hidden, flow_out },
            hyper,
        })
    }

    pub fn config(&self) -> &ConditionerConfig {
        &self.cfg
    }

    pub fn flow_hyper(&self) -> Option<&FlowHyper> {
        self.hyper.as_ref()
    }

    pub fn defs(&self) -> &[ParamDef] {
        &self.defs
    }

    pub fn init_store(&self, rng: &mut Rng64) -> ParameterStore {
        let mut store = init_store(&self.defs, rng);
        if self.cfg.scale_bias != 0.0 {
            if let Some(slot) = store.slot("head.scale.b") {
                store.array_mut(slot).fill(self.cfg.scale_bias);
            }
        }
        if self.cfg.weight_bias != 0.0 {
            if let Some(slot) = store.slot("head.weight.b") {
                store.array_mut(slot).fill(self.cfg.weight_bias);
            }
        }
        let spread = self.cfg.loc_spread;
        if spread != 0.0 {
            match self.cfg.kind {
                PolicyKind::Bit | PolicyKind::BitRnf => {
                    let slot = store.slot("head.loc.b").expect("loc head exists");
                    store.array_mut(slot).fill(spread);
                    let slot = store.slot("head.alt_loc.b").expect("alt loc head exists");
                    store.array_mut(slot).fill(-spread);
                }
                PolicyKind::Gmm(n) => {
                    let d = self.cfg.action_dim;
                    let slot = store.slot("head.loc.b").expect("loc head exists");
                    let biases = store.array_mut(slot);
                    for c in 0..n {
                        let offset = -spread + 2.0 * spread * c as f64 / (n - 1) as f64;
                        biases[c * d..(c + 1) * d].fill(offset);
                    }
                }
                _ => {}
            }
        }
        store
    }

    pub fn zeroed_store(&self) -> ParameterStore {
        zeroed_store(&self.defs)
    }

    /// Evaluate the conditioner at `state`. Deterministic: the same state
    /// and parameters always produce the same distribution.
    pub fn forward<S: Scalar, P: ParamSource<S>>(
        &self,
        params: &P,
        state: &[f64],
    ) -> Result<PolicyDistribution<S>, PolicyError> {
        if state.len() != self.cfg.state_dim {
            return Err(PolicyError::DimMismatch {
                expected: self.cfg.state_dim,
                got: state.len(),
            });
        }
        if !state.iter().all(|v| v.is_finite()) {
            return Err(PolicyError::NonFiniteState);
        }
        let b = Smoothness::DEFAULT;

        let features: Vec<S> = if self.trunk.is_empty() {
            state.iter().map(|&v| params.lift(v)).collect()
        } else {
            let mut h: Option<Vec<S>> = None;
            for (i, (aff, norm)) in self.trunk.iter().enumerate() {
                let pre = match (&h, i) {
                    (None, _) => affine_data(params, aff, state),
                    (Some(prev), _) => affine(params, aff, prev),
                };
                let normed = layer_norm(params, norm, &pre);
                h = Some(normed.into_iter().map(|v| squish(v, b)).collect());
            }
            h.expect("at least one trunk layer")
        };

        let d = self.cfg.action_dim;
        let loc_raw = affine(params, &self.heads.loc, &features);
        let scale_raw = affine(params, &self.heads.scale, &features);
        let dof = self
            .heads
            .dof
            .as_ref()
            .map(|spec| map_dof(affine(params, spec, &features)[0], d));

        let mut components = Vec::with_capacity(self.cfg.kind.component_count());
        let weights: Vec<S>;
        match self.cfg.kind {
            PolicyKind::Normal | PolicyKind::Student | PolicyKind::Rnf => {
                components.push(BaseParams {
                    loc: loc_raw.clone(),
                    scale: scale_raw.iter().map(|&y| map_scale(y)).collect(),
                    dof,
                });
                weights = alloc::vec![params.lift(1.0)];
            }
            PolicyKind::Bit | PolicyKind::BitRnf => {
                let alt_loc = affine(params, self.heads.alt_loc.as_ref().unwrap(), &features);
                let alt_scale_raw =
                    affine(params, self.heads.alt_scale.as_ref().unwrap(), &features);
                components.push(BaseParams {
                    loc: loc_raw.clone(),
                    scale: scale_raw.iter().map(|&y| map_scale(y)).collect(),
                    dof,
                });
                components.push(BaseParams {
                    loc: alt_loc,
                    scale: alt_scale_raw.iter().map(|&y| map_scale(y)).collect(),
                    dof,
                });
                let w_raw = affine(params, self.heads.weight.as_ref().unwrap(), &features);
                weights = map_weights(&w_raw, WeightKind::Bimodal)?;
            }
            PolicyKind::Gmm(n) => {
                for c in 0..n {
                    components.push(BaseParams {
                        loc: loc_raw[c * d..(c + 1) * d].to_vec(),
                        scale: scale_raw[c * d..(c + 1) * d]
                            .iter()
                            .map(|&y| map_scale(y))
                            .collect(),
                        dof: None,
                    });
                }
                let w_raw = affine(params, self.heads.weight.as_ref().unwrap(), &features);
                weights = map_weights(&w_raw, WeightKind::Gmm)?;
            }
        }

        let flow = if let Some(hyper) = self.hyper {
            let mut h = features.clone();
            for spec in &self.heads.flow_hidden {
                h = affine(params, spec, &h).into_iter().map(|v| squaresign(v, b)).collect();
            }
            let raw = affine(params, self.heads.flow_out.as_ref().unwrap(), &h);
            let k = hyper.half_intervals;
            let per_dim = 4 * k + 1;
            let mut tables = Vec::with_capacity(d);
            for dim in 0..d {
                let r = &raw[dim * per_dim..(dim + 1) * per_dim];
                let half = map_raw_params(
                    &r[..k + 1],
                    &r[k + 1..2 * k + 1],
                    &r[2 * k + 1..3 * k + 1],
                    &r[3 * k + 1..],
                    &hyper,
                )?;
                tables.push(mirror(&half, &hyper));
            }
            Some(FlowPack { hyper, tables })
        } else {
            None
        };

        Ok(PolicyDistribution {
            kind: self.cfg.kind,
            family: self.cfg.kind.family(),
            mixture: MixtureParams { components, weights },
            flow,
        })
    }
}

/// Convenience: the mixture density ignoring any flow attachment (used by
/// tests to compare the identity-flow policy against its bare base).
pub fn base_log_prob<S: Scalar>(
    dist: &PolicyDistribution<S>,
    action: &[f64],
) -> Result<S, DistError> {
    mixture_log_pdf(action, &dist.mixture, dist.family)
}
