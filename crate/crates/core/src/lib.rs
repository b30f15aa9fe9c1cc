//! Event-driven simulation of the Bouncy Particle Sampler and Randomized
//! Hamiltonian Monte Carlo, with tools for tuning the refreshment rate,
//! certifying contraction rates and measuring sampling efficiency.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bps;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod par;
pub mod path;
pub mod phase;
pub mod poly;
pub mod potential;
pub mod quadrature;
pub mod rhmc;
pub mod rng;
pub mod stats;
pub mod sym2;
pub mod testfn;
pub mod tuning;

pub use error::{Error, Result};
pub use phase::PhasePoint;
pub use rng::RngStream;
