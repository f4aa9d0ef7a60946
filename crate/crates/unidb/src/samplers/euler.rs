//! Euler(–Maruyama) discretization of the reverse bridge, the baseline the
//! exact solvers are measured against.

use super::check_step;
use super::spec::{Process, TimeGrid};
use crate::bridge::pull_gain;
use crate::error::Result;
use crate::models::{Parameterization, PredictionModel};
use crate::rng::RngStream;
use crate::schedule::{BridgeCoeffs, Schedule};
use crate::state::StateVec;

/// Drift `dx/dt` of the reverse process at the left node.
fn drift(
    schedule: &Schedule,
    model: &PredictionModel,
    parameterization: Parameterization,
    x: &StateVec,
    x_terminal: &StateVec,
    c: &BridgeCoeffs,
) -> Result<StateVec> {
    match parameterization {
        Parameterization::Data if schedule.gamma().is_infinite() => {
            // Closed form of the γ = ∞ limit, finite at the horizon.
            let x0hat = model.predict_data(x, x_terminal, c)?;
            let a = c.theta_bar_t;
            let pull = -c.theta_t / a.tanh();
            let push = 2.0 * c.theta_t * (-a).exp() / -(-2.0 * a).exp_m1();
            StateVec::combine(&[(pull + push, x_terminal), (-pull, x), (-push, &x0hat)])
        }
        Parameterization::Data => {
            let x0hat = model.predict_data(x, x_terminal, c)?;
            let k = pull_gain(c);
            let q = c.g2_t / c.sigma_prime2_t;
            StateVec::combine(&[
                (k - q * (1.0 - c.xi_t), x_terminal),
                (q - k, x),
                (-q * c.xi_t, &x0hat),
            ])
        }
        Parameterization::Noise => {
            let eps = model.predict_noise(x, x_terminal, c)?;
            let k = pull_gain(c);
            StateVec::combine(&[
                (k, x_terminal),
                (-k, x),
                (c.g2_t / c.sigma_prime2_t.sqrt(), &eps),
            ])
        }
    }
}

/// Time at which the drift is evaluated for a step leaving `s`.
///
/// Where `σ̄′²_s = 0` the score terms are singular, so the node moves to
/// `T − ε`; the data form under `γ = ∞` has a finite limit and keeps `s`.
fn drift_time(schedule: &Schedule, parameterization: Parameterization, s: f64) -> f64 {
    let closed_form = parameterization == Parameterization::Data && schedule.gamma().is_infinite();
    if closed_form || schedule.coeffs_unchecked(s).sigma_prime2_t > 0.0 {
        s
    } else {
        s.min(schedule.horizon() - schedule.clamp_eps())
    }
}

/// One reverse Euler step from `s` to `t`; `z = None` drops the diffusion.
#[allow(clippy::too_many_arguments)]
pub fn euler_step(
    schedule: &Schedule,
    model: &PredictionModel,
    parameterization: Parameterization,
    x_s: &StateVec,
    x_terminal: &StateVec,
    s: f64,
    t: f64,
    z: Option<&StateVec>,
) -> Result<StateVec> {
    check_step(schedule, s, t)?;
    x_s.check_dim(x_terminal)?;
    let c = schedule.coeffs_unchecked(drift_time(schedule, parameterization, s));
    let d = drift(schedule, model, parameterization, x_s, x_terminal, &c)?;
    let dt = t - s;
    let mut terms = vec![(1.0, x_s), (dt, &d)];
    if let Some(z) = z {
        terms.push(((c.g2_t * (s - t)).sqrt(), z));
    }
    StateVec::combine(&terms)
}

/// Full Euler run over `grid`; the diffusion is drawn from `rng` for the SDE
/// and dropped at the final step.
pub fn euler_reverse(
    schedule: &Schedule,
    model: &PredictionModel,
    x_terminal: &StateVec,
    grid: &TimeGrid,
    process: Process,
    parameterization: Parameterization,
    mut rng: Option<&mut RngStream>,
) -> Result<StateVec> {
    grid.check_against(schedule)?;
    let times = grid.times();
    let mut x = x_terminal.clone();
    for i in 0..grid.steps() {
        let last = i + 1 == grid.steps();
        let z = match (process, rng.as_deref_mut()) {
            (Process::Sde, Some(r)) if !last => Some(r.normal_vec(x.dim())),
            _ => None,
        };
        x = euler_step(
            schedule,
            model,
            parameterization,
            &x,
            x_terminal,
            times[i],
            times[i + 1],
            z.as_ref(),
        )?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OracleSpec;
    use crate::schedule::{Gamma, ScheduleParams};

    #[test]
    fn closed_form_matches_general_drift_for_large_gamma() {
        let base = Schedule::new(ScheduleParams::constant(1.0, 1.0, 1.0, Gamma::Infinite)).unwrap();
        let finite = base.with_gamma(Gamma::Finite(1e14)).unwrap();
        let m = PredictionModel::oracle(OracleSpec::Constant { c: 0.3 }, &base).unwrap();
        let (x, xt) = (StateVec::from(1.1), StateVec::from(-0.4));
        let a = euler_step(&base, &m, Parameterization::Data, &x, &xt, 0.6, 0.5, None).unwrap();
        let b = euler_step(&finite, &m, Parameterization::Data, &x, &xt, 0.6, 0.5, None).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_when_everything_coincides() {
        let s = Schedule::new(ScheduleParams::constant(1.0, 1.0, 1.0, Gamma::Finite(3.0))).unwrap();
        let m = PredictionModel::oracle(OracleSpec::Constant { c: 0.5 }, &s).unwrap();
        let x = StateVec::from(0.5);
        let out = euler_step(&s, &m, Parameterization::Data, &x, &x, 0.7, 0.6, None).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-14);
    }
}
