//! Hitting times, harmonic functions and limit laws for autoregressive,
//! max-autoregressive and random exchange chains with logarithmic and
//! subexponential innovation tails.
//!
//! * [`innovations`] — laws of `η = log_A ξ` and recurrence classification.
//! * [`chains`] — log-domain simulation and reproducible Monte Carlo.
//! * [`exact_r`] — exact recursions for the random exchange chain and the
//!   `U₀`/`U_ε` calculus.
//! * [`zlimit`] — the self-similar limit process `Z`.
//! * [`harness`] — named verification experiments, oracles and reports.
//!
//! Closed-form evaluators are generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix the working precision used by the estimators and the CLI.

// `!(x > y)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chains;
pub mod error;
pub mod exact_r;
pub mod harness;
pub mod innovations;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod zlimit;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Model = innovations::InnovationModel<f64>;
pub type ModelF32 = innovations::InnovationModel<f32>;
pub type Grid = exact_r::CdfGrid<f64>;
pub type Tails = exact_r::TailTable<f64>;
pub type Harmonic = exact_r::HarmonicTable<f64>;
pub type Config = chains::SimConfig<f64>;
pub type ZLaw = zlimit::ZParams<f64>;
