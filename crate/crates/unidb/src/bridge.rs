//! The forward bridge: closed-form transition law, exact sampling, the
//! optimal controller, and an Euler–Maruyama simulator used to validate them.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::RngStream;
use crate::schedule::{BridgeCoeffs, Schedule};
use crate::state::StateVec;

/// Isotropic Gaussian law of `x_t` given `(x_0, x_T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionLaw {
    pub mean: StateVec,
    pub var: f64,
}

pub fn transition_law(c: &BridgeCoeffs, x0: &StateVec, xt: &StateVec) -> Result<TransitionLaw> {
    let mean = StateVec::combine(&[(c.xi_t, x0), (1.0 - c.xi_t, xt)])?;
    Ok(TransitionLaw {
        mean,
        var: c.sigma_prime2_t,
    })
}

pub fn sample_transition(
    c: &BridgeCoeffs,
    x0: &StateVec,
    xt: &StateVec,
    rng: &mut RngStream,
) -> Result<StateVec> {
    let law = transition_law(c, x0, xt)?;
    if law.var == 0.0 {
        return Ok(law.mean);
    }
    let z = rng.normal_vec(law.mean.dim());
    StateVec::combine(&[(1.0, &law.mean), (law.var.sqrt(), &z)])
}

/// Controller `u*_t = g_t e^{-2θ̄_{t:T}} / (γ^{-1} + σ̄²_{t:T}) · (x_T − x)`.
pub fn optimal_control(c: &BridgeCoeffs, x: &StateVec, xt: &StateVec) -> Result<StateVec> {
    let denom = c.gamma_inv + c.sigma2_tT;
    if denom == 0.0 {
        return Err(domain("t", c.t, "times before the horizon when γ = ∞"));
    }
    let gain = c.g2_t.sqrt() * (-2.0 * c.theta_bar_tT).exp() / denom;
    xt.zip_map(x, |b, a| gain * (b - a))
}

/// Drift gain `k_t` of the controlled SDE `dx = k_t (x_T − x) dt + g_t dw`.
pub(crate) fn pull_gain(c: &BridgeCoeffs) -> f64 {
    let eps_gamma = c.gamma_inv / c.lambda2;
    let decay = (-2.0 * c.theta_bar_tT).exp();
    c.theta_t + 2.0 * c.theta_t * decay / (eps_gamma - (-2.0 * c.theta_bar_tT).exp_m1())
}

/// A sampled path with its time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
}

impl Trajectory {
    pub fn terminal(&self) -> &StateVec {
        self.states.last().expect("trajectories are never empty")
    }
}

/// Uniform forward grid from 0 to T; the last node becomes `T − ε` when
/// `γ = ∞`, where the drift gain diverges at the horizon.
pub fn forward_grid(schedule: &Schedule, n_steps: usize) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
    }
    let horizon = schedule.horizon();
    let mut times: Vec<f64> = (0..=n_steps)
        .map(|k| horizon * k as f64 / n_steps as f64)
        .collect();
    times[n_steps] = schedule.beta_upper_time();
    Ok(times)
}

/// Euler–Maruyama path of the controlled forward SDE.
///
/// With `rng = None` the Brownian increments are dropped and the path follows
/// the drift alone.
pub fn forward_euler(
    schedule: &Schedule,
    x0: &StateVec,
    xt: &StateVec,
    n_steps: usize,
    mut rng: Option<&mut RngStream>,
) -> Result<Trajectory> {
    x0.check_dim(xt)?;
    let times = forward_grid(schedule, n_steps)?;
    let mut states = Vec::with_capacity(times.len());
    let mut x = x0.clone();
    states.push(x.clone());
    for w in times.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        let c = schedule.coeffs(t)?;
        let k = pull_gain(&c);
        let mut next = StateVec::combine(&[(1.0 - k * dt, &x), (k * dt, xt)])?;
        if let Some(rng) = rng.as_deref_mut() {
            let z = rng.normal_vec(x.dim());
            next = StateVec::combine(&[(1.0, &next), ((c.g2_t * dt).sqrt(), &z)])?;
        }
        x = next;
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Gamma, ScheduleParams};

    fn sched(gamma: Gamma) -> Schedule {
        Schedule::new(ScheduleParams::constant(1.0, 1.0, 1.0, gamma)).unwrap()
    }

    #[test]
    fn endpoints_of_the_law() {
        let s = sched(Gamma::Infinite);
        let x0 = StateVec::from(2.0);
        let xt = StateVec::from(-1.0);
        let law0 = transition_law(&s.coeffs(0.0).unwrap(), &x0, &xt).unwrap();
        assert_eq!(law0.mean, x0);
        assert_eq!(law0.var, 0.0);
        let law1 = transition_law(&s.coeffs(1.0).unwrap(), &x0, &xt).unwrap();
        assert!((law1.mean[0] - xt[0]).abs() < 1e-15);
        assert_eq!(law1.var, 0.0);
    }

    #[test]
    fn zero_variance_sample_is_the_mean() {
        let s = sched(Gamma::Finite(10.0));
        let mut rng = RngStream::new(1, "t");
        let x0 = StateVec::from(0.3);
        let y = sample_transition(&s.coeffs(0.0).unwrap(), &x0, &StateVec::from(1.0), &mut rng)
            .unwrap();
        assert_eq!(y, x0);
    }

    #[test]
    fn control_vanishes_on_target_and_is_singular_at_doob_horizon() {
        let s = sched(Gamma::Infinite);
        let x = StateVec::from(0.7);
        let u = optimal_control(&s.coeffs(0.4).unwrap(), &x, &x).unwrap();
        assert_eq!(u[0], 0.0);
        assert!(optimal_control(&s.coeffs(1.0).unwrap(), &x, &StateVec::from(0.0)).is_err());
    }

    #[test]
    fn drift_only_path_reaches_terminal_point() {
        let s = sched(Gamma::Infinite);
        let path =
            forward_euler(&s, &StateVec::from(3.0), &StateVec::from(-1.0), 4000, None).unwrap();
        assert!((path.terminal()[0] + 1.0).abs() < 1e-2);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = sched(Gamma::Infinite);
        let c = s.coeffs(0.5).unwrap();
        assert!(transition_law(&c, &StateVec::zeros(2), &StateVec::zeros(3)).is_err());
    }
}
