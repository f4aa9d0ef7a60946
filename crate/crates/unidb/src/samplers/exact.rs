//! Exact-solution solvers in the data parameterization.

use super::coeffs::{step_coeffs_unchecked, StepCoeffs};
use super::run::NoiseStreams;
use super::spec::TimeGrid;
use super::{beta_step, check_step, second_order_kernel};
use crate::error::{Error, Result};
use crate::models::PredictionModel;
use crate::schedule::Schedule;
use crate::state::StateVec;

/// The previous node's `(β, prediction)` for backward differences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    steps_taken: usize,
    last: Option<(f64, StateVec)>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// History as if one step had already been taken from a node with this
    /// clamped `β` and prediction.
    pub fn seeded(beta: f64, prediction: StateVec) -> Self {
        Self {
            steps_taken: 1,
            last: Some((beta, prediction)),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn last(&self) -> Option<&(f64, StateVec)> {
        self.last.as_ref()
    }

    pub(crate) fn previous(&self) -> Result<Option<&(f64, StateVec)>> {
        match (&self.last, self.steps_taken) {
            (None, n) if n > 0 => Err(Error::MissingHistory(n + 1)),
            (last, _) => Ok(last.as_ref()),
        }
    }

    pub(crate) fn push(&mut self, beta: f64, prediction: StateVec) {
        self.steps_taken += 1;
        self.last = Some((beta, prediction));
    }
}

/// `on_prev·x_s + on_xT·x_T + on_x0hat·x̂ + noise_std·z`.
pub(crate) fn apply_first_order(
    c: &StepCoeffs,
    x_s: &StateVec,
    x_terminal: &StateVec,
    x0hat: &StateVec,
    z: Option<&StateVec>,
) -> Result<StateVec> {
    let mut terms = vec![(c.on_prev, x_s), (c.on_xt, x_terminal), (c.on_x0hat, x0hat)];
    if let Some(z) = z {
        if c.noise_std > 0.0 {
            terms.push((c.noise_std, z));
        }
    }
    StateVec::combine(&terms)
}

pub(crate) fn predict_at(
    schedule: &Schedule,
    model: &PredictionModel,
    x: &StateVec,
    x_terminal: &StateVec,
    t: f64,
) -> Result<StateVec> {
    model.predict_data(x, x_terminal, &schedule.coeffs_unchecked(t))
}

/// `(κ_t/ρ_T)(e^{-h} + h − 1)` weight of the slope estimate.
fn second_order_weight(schedule: &Schedule, t: f64, h: f64) -> f64 {
    let (kappa_t, _) = schedule.kappa_rho(t);
    kappa_t / schedule.rho_terminal() * second_order_kernel(h)
}

fn nonzero_step(h: f64, s: f64, t: f64) -> Result<f64> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::DegenerateStep(format!(
            "β step between s = {s} and t = {t} is {h}"
        )));
    }
    Ok(h)
}

/// First-order exact step with the prediction already evaluated at `s`.
pub(crate) fn step_1_from(
    schedule: &Schedule,
    x_s: &StateVec,
    x_terminal: &StateVec,
    x0hat_s: &StateVec,
    s: f64,
    t: f64,
    noise: Option<&mut NoiseStreams>,
) -> Result<StateVec> {
    let c = step_coeffs_unchecked(schedule, s, t);
    let z = noise.map(|n| n.primary.normal_vec(x_s.dim()));
    apply_first_order(&c, x_s, x_terminal, x0hat_s, z.as_ref())
}

/// First-order exact step; `noise = None` gives the Mean-ODE update.
pub fn unidbpp_step_1(
    schedule: &Schedule,
    model: &PredictionModel,
    x_s: &StateVec,
    x_terminal: &StateVec,
    s: f64,
    t: f64,
    noise: Option<&mut NoiseStreams>,
) -> Result<StateVec> {
    check_step(schedule, s, t)?;
    x_s.check_dim(x_terminal)?;
    let x0hat = predict_at(schedule, model, x_s, x_terminal, s)?;
    step_1_from(schedule, x_s, x_terminal, &x0hat, s, t, noise)
}

/// Second-order step whose slope comes from an extra evaluation at
/// `s_r = t_β(β_s + r·h)`.
///
/// The intermediate state draws from the auxiliary stream and the final
/// update from the primary one.
#[allow(clippy::too_many_arguments)]
pub fn unidbpp_step_2_singlestep(
    schedule: &Schedule,
    model: &PredictionModel,
    x_s: &StateVec,
    x_terminal: &StateVec,
    s: f64,
    t: f64,
    r: f64,
    mut noise: Option<&mut NoiseStreams>,
) -> Result<StateVec> {
    check_step(schedule, s, t)?;
    x_s.check_dim(x_terminal)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidSampler(format!(
            "singlestep r = {r} outside (0, 1)"
        )));
    }
    let h = nonzero_step(beta_step(schedule, s, t), s, t)?;
    let x0hat_s = predict_at(schedule, model, x_s, x_terminal, s)?;

    let s_r = schedule
        .t_of_beta(schedule.beta_clamped(s) + r * h)?
        .clamp(t.max(f64::MIN_POSITIVE), s);
    let mid = step_coeffs_unchecked(schedule, s, s_r);
    let z1 = noise
        .as_deref_mut()
        .map(|n| n.auxiliary.normal_vec(x_s.dim()));
    let y = apply_first_order(&mid, x_s, x_terminal, &x0hat_s, z1.as_ref())?;
    let x0hat_mid = predict_at(schedule, model, &y, x_terminal, s_r)?;

    let slope = x0hat_mid.zip_map(&x0hat_s, |a, b| (a - b) / (r * h))?;
    let base = step_1_from(schedule, x_s, x_terminal, &x0hat_s, s, t, noise)?;
    StateVec::combine(&[(1.0, &base), (second_order_weight(schedule, t, h), &slope)])
}

/// Second-order step whose slope is the backward difference against the
/// previous node; the first step of a run is plain first order.
#[allow(clippy::too_many_arguments)]
pub fn unidbpp_step_2_multistep(
    schedule: &Schedule,
    model: &PredictionModel,
    x_s: &StateVec,
    x_terminal: &StateVec,
    s: f64,
    t: f64,
    history: &mut History,
    noise: Option<&mut NoiseStreams>,
) -> Result<StateVec> {
    check_step(schedule, s, t)?;
    x_s.check_dim(x_terminal)?;
    let previous = history.previous()?.cloned();
    let beta_s = schedule.beta_clamped(s);
    let x0hat_s = predict_at(schedule, model, x_s, x_terminal, s)?;
    let base = step_1_from(schedule, x_s, x_terminal, &x0hat_s, s, t, noise)?;
    let out = match previous {
        None => base,
        Some((beta_prev, x0hat_prev)) => {
            let h = nonzero_step(beta_step(schedule, s, t), s, t)?;
            let h_prev = nonzero_step(beta_s - beta_prev, s, t)?;
            let slope = x0hat_s.zip_map(&x0hat_prev, |a, b| (a - b) / h_prev)?;
            StateVec::combine(&[(1.0, &base), (second_order_weight(schedule, t, h), &slope)])?
        }
    };
    history.push(beta_s, x0hat_s);
    Ok(out)
}

/// Deterministic first-order solver over a whole grid.
pub fn mean_ode_solver(
    schedule: &Schedule,
    model: &PredictionModel,
    x_terminal: &StateVec,
    grid: &TimeGrid,
) -> Result<StateVec> {
    grid.check_against(schedule)?;
    let mut x = x_terminal.clone();
    for w in grid.times().windows(2) {
        x = unidbpp_step_1(schedule, model, &x, x_terminal, w[0], w[1], None)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OracleSpec;
    use crate::schedule::{Gamma, ScheduleParams};

    fn sched(gamma: Gamma) -> Schedule {
        Schedule::new(ScheduleParams::constant(1.0, 1.0, 1.0, gamma)).unwrap()
    }

    #[test]
    fn point_mass_is_recovered_at_any_resolution() {
        let s = sched(Gamma::Infinite);
        let m = PredictionModel::oracle(OracleSpec::PointMass { x0: 0.7 }, &s).unwrap();
        for steps in [1, 3, 17] {
            let grid = TimeGrid::uniform(1.0, steps).unwrap();
            let out = mean_ode_solver(&s, &m, &StateVec::from(-2.0), &grid).unwrap();
            assert!((out[0] - 0.7).abs() < 1e-12, "M = {steps}: {}", out[0]);
        }
    }

    #[test]
    fn constant_model_second_order_equals_first_order() {
        let s = sched(Gamma::Finite(10.0));
        let m = PredictionModel::oracle(OracleSpec::Constant { c: 0.4 }, &s).unwrap();
        let xs = StateVec::from(1.3);
        let xt = StateVec::from(-0.5);
        let one = unidbpp_step_1(&s, &m, &xs, &xt, 0.8, 0.5, None).unwrap();
        let two = unidbpp_step_2_singlestep(&s, &m, &xs, &xt, 0.8, 0.5, 0.5, None).unwrap();
        assert!((one[0] - two[0]).abs() < 1e-14);
        let mut hist = History::seeded(s.beta_clamped(0.9), StateVec::from(0.4));
        let multi = unidbpp_step_2_multistep(&s, &m, &xs, &xt, 0.8, 0.5, &mut hist, None).unwrap();
        assert!((one[0] - multi[0]).abs() < 1e-14);
        assert_eq!(hist.steps_taken(), 2);
    }

    #[test]
    fn lost_history_is_an_error() {
        let s = sched(Gamma::Finite(10.0));
        let m = PredictionModel::oracle(OracleSpec::Constant { c: 0.4 }, &s).unwrap();
        let mut hist = History {
            steps_taken: 3,
            last: None,
        };
        let x = StateVec::from(0.0);
        let err = unidbpp_step_2_multistep(&s, &m, &x, &x, 0.5, 0.2, &mut hist, None).unwrap_err();
        assert_eq!(err, Error::MissingHistory(4));
    }

    #[test]
    fn each_step_costs_the_documented_evaluations() {
        let s = sched(Gamma::Finite(10.0));
        let m = PredictionModel::oracle(OracleSpec::Constant { c: 0.4 }, &s).unwrap();
        let x = StateVec::from(0.0);
        unidbpp_step_2_singlestep(&s, &m, &x, &x, 0.6, 0.3, 0.5, None).unwrap();
        assert_eq!(m.eval_count(), 2);
    }
}
