//! Minimal feedforward building blocks over [`ParameterStore`] slots.
//!
//! Layers are *specs* — slot indices into a parameter store plus shapes —
//! so the same network definition evaluates plain (`f64`) or taped
//! ([`crate::autodiff::Var`]) depending on the parameter source.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{ParameterStore, TapedParams, Var};
use crate::rng::Rng64;
use crate::scalar::Scalar;

/// Uniform access to parameter arrays for a scalar type.
pub trait ParamSource<S: Scalar> {
    fn array(&self, slot: usize) -> &[S];
    /// A constant in this source's evaluation context.
    fn lift(&self, c: f64) -> S;
}

impl ParamSource<f64> for ParameterStore {
    fn array(&self, slot: usize) -> &[f64] {
        ParameterStore::array(self, slot)
    }

    fn lift(&self, c: f64) -> f64 {
        c
    }
}

impl<'t> ParamSource<Var<'t>> for TapedParams<'t> {
    fn array(&self, slot: usize) -> &[Var<'t>] {
        TapedParams::array(self, slot)
    }

    fn lift(&self, c: f64) -> Var<'t> {
        self.tape().constant(c)
    }
}

/// A dense layer: weight slot (row-major `[out][in]`) plus bias slot.
#[derive(Clone, Copy, Debug)]
pub struct AffineSpec {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Layer normalization: gain and bias slots over a feature width.
#[derive(Clone, Copy, Debug)]
pub struct NormSpec {
    pub gain: usize,
    pub bias: usize,
    pub width: usize,
}

const NORM_EPS: f64 = 1e-5;

/// Dense layer over raw (data) inputs.
pub fn affine_data<S: Scalar, P: ParamSource<S>>(
    p: &P,
    spec: &AffineSpec,
    x: &[f64],
) -> Vec<S> {
    debug_assert_eq!(x.len(), spec.fan_in);
    let w = p.array(spec.weight);
    let b = p.array(spec.bias);
    (0..spec.fan_out)
        .map(|o| {
            let mut acc = b[o];
            let row = &w[o * spec.fan_in..(o + 1) * spec.fan_in];
            for (wi, &xi) in row.iter().zip(x) {
                acc = acc + *wi * xi;
            }
            acc
        })
        .collect()
}

/// Dense layer over hidden activations.
pub fn affine<S: Scalar, P: ParamSource<S>>(p: &P, spec: &AffineSpec, x: &[S]) -> Vec<S> {
    debug_assert_eq!(x.len(), spec.fan_in);
    let w = p.array(spec.weight);
    let b = p.array(spec.bias);
    (0..spec.fan_out)
        .map(|o| {
            let mut acc = b[o];
            let row = &w[o * spec.fan_in..(o + 1) * spec.fan_in];
            for (&wi, &xi) in row.iter().zip(x) {
                acc = acc + wi * xi;
            }
            acc
        })
        .collect()
}

/// Layer normalization with learnable gain and bias.
pub fn layer_norm<S: Scalar, P: ParamSource<S>>(p: &P, spec: &NormSpec, h: &[S]) -> Vec<S> {
    debug_assert_eq!(h.len(), spec.width);
    let n = spec.width as f64;
    let mut mean = h[0];
    for &v in &h[1..] {
        mean = mean + v;
    }
    mean = mean / n;
    let centered: Vec<S> = h.iter().map(|&v| v - mean).collect();
    let mut var = centered[0] * centered[0];
    for &c in &centered[1..] {
        var = var + c * c;
    }
    var = var / n;
    let denom = (var + NORM_EPS).sqrt();
    let gain = p.array(spec.gain);
    let bias = p.array(spec.bias);
    centered
        .into_iter()
        .enumerate()
        .map(|(i, c)| gain[i] * (c / denom) + bias[i])
        .collect()
}

/// How a parameter array is initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`, the usual dense-layer default.
    UniformFanIn,
    Zeros,
    Ones,
}

/// One named parameter array in a network manifest.
#[derive(Clone, Debug)]
pub struct ParamDef {
    pub name: String,
    pub len: usize,
    pub init: Init,
    pub fan_in: usize,
}

/// Collects parameter definitions and hands out layer specs whose slot
/// indices match the registration order.
#[derive(Default)]
pub struct NetBuilder {
    defs: Vec<ParamDef>,
}

impl NetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: String, len: usize, init: Init, fan_in: usize) -> usize {
        self.defs.push(ParamDef { name, len, init, fan_in });
        self.defs.len() - 1
    }

    pub fn affine(&mut self, name: &str, fan_in: usize, fan_out: usize) -> AffineSpec {
        let weight = self.push(
            alloc::format!("{name}.w"),
            fan_in * fan_out,
            Init::UniformFanIn,
            fan_in,
        );
        let bias = self.push(alloc::format!("{name}.b"), fan_out, Init::Zeros, fan_in);
        AffineSpec { weight, bias, fan_in, fan_out }
    }

    /// Dense layer whose weights start at zero, for heads that must begin
    /// as the identity mapping (flow outputs start as the identity
    /// transform this way).
    pub fn affine_zeroed(&mut self, name: &str, fan_in: usize, fan_out: usize) -> AffineSpec {
        let weight =
            self.push(alloc::format!("{name}.w"), fan_in * fan_out, Init::Zeros, fan_in);
        let bias = self.push(alloc::format!("{name}.b"), fan_out, Init::Zeros, fan_in);
        AffineSpec { weight, bias, fan_in, fan_out }
    }

    pub fn norm(&mut self, name: &str, width: usize) -> NormSpec {
        let gain = self.push(alloc::format!("{name}.g"), width, Init::Ones, width);
        let bias = self.push(alloc::format!("{name}.b"), width, Init::Zeros, width);
        NormSpec { gain, bias, width }
    }

    pub fn finish(self) -> Vec<ParamDef> {
        self.defs
    }
}

/// Materialize a store from a manifest with seeded initialization.
pub fn init_store(defs: &[ParamDef], rng: &mut Rng64) -> ParameterStore {
    let mut store = ParameterStore::new();
    for def in defs {
        let values = match def.init {
            Init::Zeros => alloc::vec![0.0; def.len],
            Init::Ones => alloc::vec![1.0; def.len],
            Init::UniformFanIn => {
                let bound = 1.0 / libm::sqrt(def.fan_in.max(1) as f64);
                (0..def.len).map(|_| rng.uniform_in(-bound, bound)).collect()
            }
        };
        store.add(&def.name, values).expect("manifest names are unique");
    }
    store
}

/// All-zero store with the manifest's shapes (gains included), used to probe
/// the identity configuration.
pub fn zeroed_store(defs: &[ParamDef]) -> ParameterStore {
    let mut store = ParameterStore::new();
    for def in defs {
        store.add(&def.name, alloc::vec![0.0; def.len]).expect("manifest names are unique");
    }
    store
}
