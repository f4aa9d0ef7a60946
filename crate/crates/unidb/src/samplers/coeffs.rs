use serde::{Deserialize, Serialize};

use super::check_step;
use crate::error::Result;
use crate::schedule::{Gamma, Schedule};

/// Weights of one first-order reverse step
/// `x_t = on_prev·x_s + on_xT·x_T + on_x0hat·x̂_0 + noise_std·z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCoeffs {
    pub on_prev: f64,
    #[serde(rename = "on_xT")]
    pub on_xt: f64,
    pub on_x0hat: f64,
    pub noise_std: f64,
}

impl StepCoeffs {
    pub fn weight_sum(&self) -> f64 {
        self.on_prev + self.on_xt + self.on_x0hat
    }
}

/// Exact-solution weights in κ/ρ form.
///
/// Every term is evaluated literally, so the partition of unity is a real
/// check of the arithmetic rather than something forced by construction.
pub fn step_coeffs(schedule: &Schedule, s: f64, t: f64) -> Result<StepCoeffs> {
    check_step(schedule, s, t)?;
    Ok(step_coeffs_unchecked(schedule, s, t))
}

pub(crate) fn step_coeffs_unchecked(schedule: &Schedule, s: f64, t: f64) -> StepCoeffs {
    let (kappa_s, rho_s) = schedule.kappa_rho(s);
    let (kappa_t, rho_t) = schedule.kappa_rho(t);
    let rho_big = schedule.rho_terminal();
    let ratio = rho_t / rho_s;
    let cross = rho_t * kappa_s / (rho_big * rho_s);
    let direct = kappa_t / rho_big;
    StepCoeffs {
        on_prev: ratio,
        on_xt: 1.0 - ratio + cross - direct,
        on_x0hat: direct - cross,
        noise_std: schedule.delta_d_unchecked(s, t),
    }
}

/// Which coefficient family drives a first-order step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMode {
    /// The schedule's own γ.
    #[default]
    Unidb,
    /// The same weights with γ = ∞.
    Goub,
    DbimVe,
    DbimVp,
    UnidbVe,
    UnidbVp,
}

impl LimitMode {
    pub const ALL: [LimitMode; 6] = [
        LimitMode::Unidb,
        LimitMode::Goub,
        LimitMode::DbimVe,
        LimitMode::DbimVp,
        LimitMode::UnidbVe,
        LimitMode::UnidbVp,
    ];

    /// Short token used inside sampler ids.
    pub fn token(self) -> &'static str {
        match self {
            LimitMode::Unidb => "unidb",
            LimitMode::Goub => "goub",
            LimitMode::DbimVe => "dbimve",
            LimitMode::DbimVp => "dbimvp",
            LimitMode::UnidbVe => "unidbve",
            LimitMode::UnidbVp => "unidbvp",
        }
    }

    /// Name used in configs, CSV and the compare subcommand.
    pub fn name(self) -> &'static str {
        match self {
            LimitMode::Unidb => "unidb",
            LimitMode::Goub => "goub",
            LimitMode::DbimVe => "dbim_ve",
            LimitMode::DbimVp => "dbim_vp",
            LimitMode::UnidbVe => "unidb_ve",
            LimitMode::UnidbVp => "unidb_vp",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.token() == token || m.name() == token)
    }

    /// True for the VE/VP families, which only supply plain first-order weights.
    pub fn is_comparison_provider(self) -> bool {
        !matches!(self, LimitMode::Unidb | LimitMode::Goub)
    }
}

/// DBIM-style endpoint weights at one time.
struct ImplicitTerms {
    a: f64,
    b: f64,
}

/// Weights of the selected family between `s` and `t`.
///
/// The VE/VP families follow the implicit-model update
/// `x_t = a_t x_T + b_t x̂_0 + (√(c_t² − ζ²)/c_s)(x_s − a_s x_T − b_s x̂_0) + ζ z`.
/// The contraction `√(c_t² − ζ²)/c_s` is used in its reduced closed form,
/// which avoids cancellation when it is tiny.
pub fn limit_coeffs(mode: LimitMode, schedule: &Schedule, s: f64, t: f64) -> Result<StepCoeffs> {
    check_step(schedule, s, t)?;
    match mode {
        LimitMode::Unidb => Ok(step_coeffs_unchecked(schedule, s, t)),
        LimitMode::Goub => Ok(step_coeffs_unchecked(
            &schedule.with_gamma(Gamma::Infinite)?,
            s,
            t,
        )),
        LimitMode::DbimVe | LimitMode::UnidbVe => Ok(ve_coeffs(mode, schedule, s, t)),
        LimitMode::DbimVp | LimitMode::UnidbVp => Ok(vp_coeffs(mode, schedule, s, t)),
    }
}

fn implicit_step(
    at_s: ImplicitTerms,
    at_t: ImplicitTerms,
    zeta2: f64,
    contraction: f64,
) -> StepCoeffs {
    StepCoeffs {
        on_prev: contraction,
        on_xt: at_t.a - at_s.a * contraction,
        on_x0hat: at_t.b - at_s.b * contraction,
        noise_std: zeta2.max(0.0).sqrt(),
    }
}

/// `σ_t² = 2λ²θ̄_t`; contraction `σ_t²/σ_s²`.
fn ve_coeffs(mode: LimitMode, schedule: &Schedule, s: f64, t: f64) -> StepCoeffs {
    let two_l2 = 2.0 * schedule.lambda2();
    let var = |x: f64| two_l2 * schedule.theta_bar_unchecked(0.0, x);
    let (vs, vt, vtot) = (var(s), var(t), var(schedule.horizon()));
    let gamma_inv = schedule.gamma().inverse();
    let terms = |v: f64| {
        let a = match mode {
            LimitMode::UnidbVe => v / (gamma_inv + vtot),
            _ => v / vtot,
        };
        ImplicitTerms { a, b: 1.0 - a }
    };
    let (zeta2, contraction) = if vs > 0.0 {
        (vt - vt * vt / vs, vt / vs)
    } else {
        (0.0, 0.0)
    };
    implicit_step(terms(vs), terms(vt), zeta2, contraction)
}

/// `α_t = e^{-θ̄_t}`, `σ_t² = 1 − e^{-2θ̄_t}`; contraction `α_s σ_t² / (α_t σ_s²)`.
fn vp_coeffs(mode: LimitMode, schedule: &Schedule, s: f64, t: f64) -> StepCoeffs {
    let bar = |x: f64| schedule.theta_bar_unchecked(0.0, x);
    let alpha = |x: f64| (-bar(x)).exp();
    let var = |x: f64| -(-2.0 * bar(x)).exp_m1();
    let horizon = schedule.horizon();
    let (alpha_big, var_big) = (alpha(horizon), var(horizon));
    let gamma_inv = schedule.gamma().inverse();
    let terms = |x: f64| {
        let (al, v) = (alpha(x), var(x));
        let shrink = alpha_big * alpha_big * v / (al * al * var_big);
        match mode {
            LimitMode::UnidbVp => {
                // Numerator and denominator of the SNR ratio scaled by σ_t²/α_t²
                // so the origin stays finite.
                let p = alpha_big * gamma_inv / var_big;
                let a = al * (1.0 - (p + shrink) / (p + 1.0));
                ImplicitTerms { a, b: 1.0 - a }
            }
            _ => ImplicitTerms {
                a: alpha_big * v / (al * var_big),
                b: al * (1.0 - shrink),
            },
        }
    };
    let (al_s, al_t, v_s, v_t) = (alpha(s), alpha(t), var(s), var(t));
    let (zeta2, contraction) = if v_s > 0.0 {
        (
            v_t * (1.0 - al_s * al_s * v_t / (al_t * al_t * v_s)),
            v_t * al_s / (al_t * v_s),
        )
    } else {
        (0.0, 0.0)
    };
    implicit_step(terms(s), terms(t), zeta2, contraction)
}
