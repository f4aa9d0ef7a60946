//! Exact-solution solvers in the noise parameterization.
//!
//! The starting node is always clamped to `T − ε`: at the horizon the noise
//! prediction is undefined (`σ̄′_T = 0`) and under `γ = ∞` the step's noise
//! scale diverges.

use super::exact::History;
use super::run::NoiseStreams;
use super::{beta_step, check_step};
use crate::error::{Error, Result};
use crate::models::PredictionModel;
use crate::schedule::Schedule;
use crate::state::StateVec;

/// Weights of `x_t = on_prev·x_s + on_xT·x_T + on_eps·ε̂ + noise_std·z`.
#[derive(Debug, Clone, Copy)]
struct NoiseCoeffs {
    on_prev: f64,
    on_xt: f64,
    on_eps: f64,
    /// `λκ_t/√ρ_T · √(ρ_s/κ_s)`, the prefactor of the second-order kernel.
    kernel_scale: f64,
    noise_std: f64,
}

fn clamp_start(schedule: &Schedule, s: f64) -> f64 {
    s.min(schedule.horizon() - schedule.clamp_eps())
}

fn noise_coeffs(schedule: &Schedule, s: f64, t: f64) -> NoiseCoeffs {
    let (kappa_s, rho_s) = schedule.kappa_rho(s);
    let (kappa_t, rho_t) = schedule.kappa_rho(t);
    let lead = schedule.lambda2().sqrt() * kappa_t / schedule.rho_terminal().sqrt();
    let ratio = kappa_t / kappa_s;
    let root_s = (rho_s / kappa_s).sqrt();
    let root_t = (rho_t / kappa_t).sqrt();
    NoiseCoeffs {
        on_prev: ratio,
        on_xt: 1.0 - ratio,
        on_eps: -2.0 * lead * (root_s - root_t),
        kernel_scale: lead * root_s,
        noise_std: schedule.delta_n_unchecked(s, t),
    }
}

/// `∫_0^h x e^{-x/2} dx = 4 − (2h + 4)e^{-h/2}`.
pub(crate) fn noise_kernel(h: f64) -> f64 {
    if h.abs() >= 0.1 {
        return 4.0 - (2.0 * h + 4.0) * (-0.5 * h).exp();
    }
    // Σ (−1/2)^n h^{n+2} / (n!(n+2))
    let mut power = h * h;
    let mut sum = 0.0;
    let mut fact = 1.0;
    for n in 0..20 {
        if n > 0 {
            fact *= n as f64;
            power *= -0.5 * h;
        }
        sum += power / (fact * (n as f64 + 2.0));
    }
    sum
}

fn apply(
    c: &NoiseCoeffs,
    x_s: &StateVec,
    x_terminal: &StateVec,
    eps: &StateVec,
    z: Option<&StateVec>,
) -> Result<StateVec> {
    let mut terms = vec![(c.on_prev, x_s), (c.on_xt, x_terminal), (c.on_eps, eps)];
    if let Some(z) = z {
        if c.noise_std > 0.0 {
            terms.push((c.noise_std, z));
        }
    }
    StateVec::combine(&terms)
}

fn predict_noise_at(
    schedule: &Schedule,
    model: &PredictionModel,
    x: &StateVec,
    x_terminal: &StateVec,
    t: f64,
) -> Result<StateVec> {
    model.predict_noise(x, x_terminal, &schedule.coeffs_unchecked(t))
}

fn degenerate(h: f64, s: f64, t: f64) -> Result<f64> {
    if h == 0.0 || !h.is_finite() {
        return Err(Error::DegenerateStep(format!(
            "β step between s = {s} and t = {t} is {h}"
        )));
    }
    Ok(h)
}

/// First-order noise-parameterized step; `noise = None` drops `δⁿ·z`.
pub fn noise_param_step_1(
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
    let s = clamp_start(schedule, s);
    let eps = predict_noise_at(schedule, model, x_s, x_terminal, s)?;
    let c = noise_coeffs(schedule, s, t);
    let z = noise.map(|n| n.primary.normal_vec(x_s.dim()));
    apply(&c, x_s, x_terminal, &eps, z.as_ref())
}

/// Second-order singlestep counterpart of [`noise_param_step_1`].
#[allow(clippy::too_many_arguments)]
pub fn noise_param_step_2_singlestep(
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
    let s = clamp_start(schedule, s);
    let h = degenerate(beta_step(schedule, s, t), s, t)?;
    let eps_s = predict_noise_at(schedule, model, x_s, x_terminal, s)?;

    let s_r = schedule
        .t_of_beta(schedule.beta_clamped(s) + r * h)?
        .clamp(t.max(f64::MIN_POSITIVE), s);
    let z1 = noise
        .as_deref_mut()
        .map(|n| n.auxiliary.normal_vec(x_s.dim()));
    let y = apply(
        &noise_coeffs(schedule, s, s_r),
        x_s,
        x_terminal,
        &eps_s,
        z1.as_ref(),
    )?;
    let eps_mid = predict_noise_at(schedule, model, &y, x_terminal, s_r)?;

    let c = noise_coeffs(schedule, s, t);
    let z2 = noise.map(|n| n.primary.normal_vec(x_s.dim()));
    let base = apply(&c, x_s, x_terminal, &eps_s, z2.as_ref())?;
    let slope = eps_mid.zip_map(&eps_s, |a, b| (a - b) / (r * h))?;
    StateVec::combine(&[(1.0, &base), (-c.kernel_scale * noise_kernel(h), &slope)])
}

/// Second-order multistep counterpart of [`noise_param_step_1`]; `history`
/// stores noise predictions.
#[allow(clippy::too_many_arguments)]
pub fn noise_param_step_2_multistep(
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
    let s = clamp_start(schedule, s);
    let beta_s = schedule.beta_clamped(s);
    let eps_s = predict_noise_at(schedule, model, x_s, x_terminal, s)?;
    let c = noise_coeffs(schedule, s, t);
    let z = noise.map(|n| n.primary.normal_vec(x_s.dim()));
    let base = apply(&c, x_s, x_terminal, &eps_s, z.as_ref())?;
    let out = match previous {
        None => base,
        Some((beta_prev, eps_prev)) => {
            let h = degenerate(beta_step(schedule, s, t), s, t)?;
            let h_prev = degenerate(beta_s - beta_prev, s, t)?;
            let slope = eps_s.zip_map(&eps_prev, |a, b| (a - b) / h_prev)?;
            StateVec::combine(&[(1.0, &base), (-c.kernel_scale * noise_kernel(h), &slope)])?
        }
    };
    history.push(beta_s, eps_s);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Denoiser, Parameterization};
    use crate::schedule::{BridgeCoeffs, Gamma, ScheduleParams};

    struct ZeroNoise;

    impl Denoiser for ZeroNoise {
        fn parameterization(&self) -> Parameterization {
            Parameterization::Noise
        }

        fn predict(&self, x: &StateVec, _: &StateVec, _: &BridgeCoeffs) -> Result<StateVec> {
            Ok(StateVec::zeros(x.dim()))
        }
    }

    #[test]
    fn kernel_series_matches_closed_form() {
        for h in [0.05_f64, 0.0999, 0.1, 0.2] {
            let closed = 4.0 - (2.0 * h + 4.0) * (-0.5 * h).exp();
            let series = {
                let mut power = h * h;
                let mut fact = 1.0;
                let mut sum = 0.0;
                for n in 0..25 {
                    if n > 0 {
                        fact *= n as f64;
                        power *= -0.5 * h;
                    }
                    sum += power / (fact * (n as f64 + 2.0));
                }
                sum
            };
            assert!((closed - series).abs() < 1e-14);
            assert!((noise_kernel(h) - series).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_noise_prediction_contracts_toward_terminal() {
        let s = Schedule::new(ScheduleParams::constant(1.0, 1.0, 1.0, Gamma::Finite(5.0))).unwrap();
        let m = PredictionModel::new(ZeroNoise);
        let (xs, xt) = (StateVec::from(2.0), StateVec::from(-1.0));
        let out = noise_param_step_1(&s, &m, &xs, &xt, 0.7, 0.4, None).unwrap();
        let (k_s, _) = s.kappa_rho(0.7);
        let (k_t, _) = s.kappa_rho(0.4);
        let w = k_t / k_s;
        assert!((out[0] - (w * 2.0 - (1.0 - w))).abs() < 1e-14);
    }
}
