//! Pessimistic distributional actor-critic for continuous control.
//!
//! The crate bundles four things:
//!
//! * a small reverse-mode differentiation engine with the linear /
//!   dropout / layer-norm / ReLU blocks used by the actor and critic
//!   networks ([`nn`]);
//! * the algorithm itself — a single Gaussian critic trained by
//!   negative log-likelihood against β-pessimistic TD targets, a
//!   tanh-squashed Gaussian actor, automatic temperature tuning — plus
//!   twin-critic SAC and twin-distributional ESTAC baselines
//!   ([`critic`], [`actor`], [`trainer`]);
//! * two desk-scale point-mass environments, one stochastic with a
//!   danger zone and one deterministic ([`envs`]);
//! * a tabular Monte Carlo lab that checks the overestimation
//!   inequalities the pessimistic backup is built on ([`theory`]).
//!
//! Everything numeric is generic over the scalar type via [`Real`]
//! (`f32` or `f64`); concrete aliases for the common entry points live
//! at the crate root.

pub mod actor;
pub mod critic;
pub mod dist;
pub mod envs;
pub mod error;
pub mod nn;
pub mod replay;
pub mod scalar;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::{as_f64, real, Real};

pub type Mlp32 = nn::Mlp<f32>;
pub type Mlp64 = nn::Mlp<f64>;
pub type Policy32 = actor::Policy<f32>;
pub type Policy64 = actor::Policy<f64>;
pub type ReplayBuffer32 = replay::ReplayBuffer<f32>;
pub type ReplayBuffer64 = replay::ReplayBuffer<f64>;
pub type TabularMdp64 = theory::TabularMdp<f64>;
pub type Algorithm32 = trainer::Algorithm<f32>;
pub type Algorithm64 = trainer::Algorithm<f64>;
