//! Numerical laboratory for online linear-quadratic regulation.
//!
//! The crate is organized around the pipeline of an adaptive LQR experiment:
//!
//! - [`control`]: dense-real-matrix control primitives: spectral radius,
//!   discrete Lyapunov (Stein) solves, the discrete algebraic Riccati
//!   equation fixed point, controller valuation, and H∞ norms.
//! - [`perturb`]: the certificate layer of safe radii, Riccati derivative
//!   formulas, curve tracing along instance interpolations, and the
//!   suboptimality / Lyapunov-contraction checks for certainty-equivalent
//!   controllers.
//! - [`sim`]: seeded Gaussian rollouts under arbitrary policies with
//!   per-step cost accounting and regret.
//! - [`estim`]: ordinary least squares system identification, the
//!   self-normalized confidence radius, and exploration-subspace
//!   projectors with two-scale diagnostics.
//! - [`adaptive`]: certainty-equivalent control with continual ε-greedy
//!   exploration on a doubling epoch schedule.
//! - [`packing`]: lower-bound packing constructions: indistinguishable
//!   alternative instances, first-order controller displacement, sign
//!   decoding, and the KL diagnostic.
//!
//! All operations are pure functions of their inputs and safe to call from
//! many threads; randomized operations take explicit seeds.

pub mod adaptive;
pub mod control;
pub mod error;
pub mod estim;
pub mod instances;
pub mod linalg;
pub mod packing;
pub mod perturb;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
