//! Reverse-time integrators: the Euler baseline, the exact-solution solvers
//! of orders one and two in both parameterizations, the SDE corrector, and
//! the limit-case coefficient providers.

mod coeffs;
mod corrector;
mod euler;
mod exact;
mod noise;
mod run;
mod spec;

pub use coeffs::{limit_coeffs, step_coeffs, LimitMode, StepCoeffs};
pub use corrector::{corrector_coeffs, phi, unidbpp_corrected_step, BChoice, CorrectorForm};
pub use euler::{euler_reverse, euler_step};
pub use exact::{
    mean_ode_solver, unidbpp_step_1, unidbpp_step_2_multistep, unidbpp_step_2_singlestep, History,
};
pub use noise::{noise_param_step_1, noise_param_step_2_multistep, noise_param_step_2_singlestep};
pub use run::{run_sampler, NoiseStreams, RunOutput, StepRecord};
pub use spec::{CorrectorSpec, Family, Order, Process, SamplerSpec, Stepping, TimeGrid};

use crate::error::{domain, Result};
use crate::schedule::Schedule;

/// Checks `T ≥ s > t ≥ 0`.
pub(crate) fn check_step(schedule: &Schedule, s: f64, t: f64) -> Result<()> {
    let horizon = schedule.horizon();
    if s.is_nan() || s > horizon || s <= 0.0 {
        return Err(domain("s", s, format!("(0, {horizon}]")));
    }
    if t.is_nan() || t < 0.0 || t >= s {
        return Err(domain("t", t, format!("[0, s = {s})")));
    }
    Ok(())
}

/// `β_t − β_s` with both ends clamped into the finite β window.
pub(crate) fn beta_step(schedule: &Schedule, s: f64, t: f64) -> f64 {
    schedule.beta_clamped(t) - schedule.beta_clamped(s)
}

/// `e^{-h} + h − 1` without cancellation for small `h`.
pub(crate) fn second_order_kernel(h: f64) -> f64 {
    if h.abs() >= 0.1 {
        return (-h).exp_m1() + h;
    }
    // Σ_{n≥2} (−h)^n / n!
    let mut term = h * h / 2.0;
    let mut sum = term;
    for n in 3..20 {
        term *= -h / n as f64;
        sum += term;
    }
    sum
}
