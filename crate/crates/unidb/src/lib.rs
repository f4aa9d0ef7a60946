//! Coefficient algebra, forward process and exact-solution reverse samplers
//! for unified diffusion bridges, with analytic oracles and a seeded
//! experiment harness.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod checks;
pub mod error;
pub mod harness;
pub mod models;
pub mod parallel;
mod quadrature;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod state;

pub use error::{Error, Result};
pub use schedule::{BridgeCoeffs, Gamma, Schedule, ScheduleParams};
pub use state::StateVec;
