//! Restricted normalizing flows (RNF) with closed-form means.
//!
//! A normalizing flow pushes a simple base distribution through an invertible
//! transform; in general that destroys every closed-form statistic of the
//! base. This crate implements the *restricted* construction in which the
//! base is symmetric about its location and the transform is an odd function
//! of the standardized residual, so the mean of the transformed distribution
//! stays analytic (it is simply the base location, and a weighted average of
//! locations for mixtures). Two transform backends are provided: an
//! odd-restricted linear rational spline ([`lrs`]) and an odd-restricted
//! coupling layer ([`realnvp`]).
//!
//! On top of the flow machinery sit the pieces needed to use these
//! distributions as reinforcement-learning policies:
//!
//! - [`nonlin`] — the squareplus function family (exponential-free
//!   activations and domain mappings),
//! - [`autodiff`] — a scalar reverse-mode tape so policy-gradient losses can
//!   be differentiated through spline inverses and log-determinants,
//! - [`base`] — diagonal normal / student-t bases and their mixtures,
//! - [`policy`] — the state-conditioned composite policy (conditioner
//!   network + distribution heads),
//! - [`env`] / [`train`] — toy continuous-control environments and an
//!   on-policy advantage actor-critic trainer,
//! - [`rng`] — a small checkpointable PRNG so every run is reproducible from
//!   a seed.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats and the CLI live
//! in the companion `rnf-cli` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod base;
pub mod env;
pub mod lrs;
pub mod nn;
pub mod nonlin;
pub mod policy;
pub mod quad;
pub mod realnvp;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod train;

pub use scalar::Scalar;
