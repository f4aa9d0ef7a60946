//! Noise schedule `θ_t`, its accumulated integrals, and every scalar
//! coefficient derived from them.
//!
//! All bridge and sampler formulas read their scalars from here. Coefficients
//! are kept in `κ`/`ρ` form; `β = ln(κ/ρ)` is only materialized for step sizes
//! and is clamped away from the singular endpoints.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::quadrature::{adaptive_simpson, CumulativeTable};

/// Number of Chebyshev knots in the cached cumulative table.
pub const TABLE_KNOTS: usize = 4096;
/// Absolute tolerance of the adaptive quadrature for `θ̄`.
pub const QUADRATURE_TOL: f64 = 1e-12;
/// Lower time clamp for β-space operations, as a fraction of the horizon.
pub const CLAMP_FRACTION: f64 = 1e-5;

/// Steady variance level used by default, `30²/255²`.
pub const DEFAULT_LAMBDA2: f64 = (30.0 * 30.0) / (255.0 * 255.0);
/// Default terminal decay `e^{-θ̄_T}`.
pub const DEFAULT_TERMINAL_DECAY: f64 = 0.005;
/// Default cosine offset `s`.
pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;
/// Default terminal penalty.
pub const DEFAULT_GAMMA: f64 = 1e7;

/// Terminal penalty: a positive real or the exact infinite limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    /// `γ^{-1}`, exactly zero for the infinite marker.
    pub fn inverse(self) -> f64 {
        match self {
            Gamma::Finite(g) => 1.0 / g,
            Gamma::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Gamma::Infinite)
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Finite(g) => write!(f, "{g:e}"),
            Gamma::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Gamma::Infinite);
        }
        let g: f64 = s.parse().map_err(|_| Error::InvalidParameter {
            key: "gamma",
            reason: format!("`{s}` is neither a number nor \"inf\""),
        })?;
        if g.is_infinite() && g > 0.0 {
            Ok(Gamma::Infinite)
        } else {
            Ok(Gamma::Finite(g))
        }
    }
}

impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Finite(g) => s.serialize_f64(*g),
            Gamma::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Gamma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(g) => Ok(Gamma::Finite(g)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Shape of the raw rate before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKind {
    Constant { theta0: f64 },
    FlippedCosine { offset: f64 },
}

/// Which way round the terminal coefficient is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalConvention {
    /// `e^{-θ̄_T} = terminal_decay`.
    NegativeExponent,
    /// `e^{θ̄_T} = terminal_decay`, which needs a value above 1.
    Literal,
}

/// How the raw rate is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Multiply the raw rate by a fixed factor.
    Scale(f64),
    /// Pick the factor so that the terminal coefficient hits `value`.
    TerminalDecay {
        value: f64,
        convention: TerminalConvention,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub kind: ScheduleKind,
    pub horizon: f64,
    pub lambda2: f64,
    pub gamma: Gamma,
    pub normalization: Normalization,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::FlippedCosine {
                offset: DEFAULT_COSINE_OFFSET,
            },
            horizon: 1.0,
            lambda2: DEFAULT_LAMBDA2,
            gamma: Gamma::Finite(DEFAULT_GAMMA),
            normalization: Normalization::TerminalDecay {
                value: DEFAULT_TERMINAL_DECAY,
                convention: TerminalConvention::NegativeExponent,
            },
        }
    }
}

impl ScheduleParams {
    /// Constant rate `θ₀` with unit scale.
    pub fn constant(theta0: f64, horizon: f64, lambda2: f64, gamma: Gamma) -> Self {
        Self {
            kind: ScheduleKind::Constant { theta0 },
            horizon,
            lambda2,
            gamma,
            normalization: Normalization::Scale(1.0),
        }
    }

    pub fn with_gamma(mut self, gamma: Gamma) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_lambda2(mut self, lambda2: f64) -> Self {
        self.lambda2 = lambda2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key, reason: &str| {
            Err(Error::InvalidParameter {
                key,
                reason: reason.to_string(),
            })
        };
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad("horizon", "must be a finite positive time");
        }
        if !(self.lambda2.is_finite() && self.lambda2 > 0.0) {
            return bad("lambda2", "must be finite and positive");
        }
        if let Gamma::Finite(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return bad("gamma", "must be positive or \"inf\"");
            }
        }
        match self.kind {
            ScheduleKind::Constant { theta0 } if !(theta0.is_finite() && theta0 > 0.0) => {
                return bad("theta0", "must be finite and positive");
            }
            ScheduleKind::FlippedCosine { offset } if !(offset.is_finite() && offset >= 0.0) => {
                return bad("cosine_offset", "must be finite and nonnegative");
            }
            _ => {}
        }
        match self.normalization {
            Normalization::Scale(s) if !(s.is_finite() && s > 0.0) => {
                bad("theta_scale", "must be finite and positive")
            }
            Normalization::TerminalDecay { value, convention } => {
                let ok = match convention {
                    TerminalConvention::NegativeExponent => value > 0.0 && value < 1.0,
                    TerminalConvention::Literal => value.is_finite() && value > 1.0,
                };
                if ok {
                    Ok(())
                } else {
                    bad(
                        "terminal_decay",
                        "must lie in (0,1), or above 1 under the literal convention",
                    )
                }
            }
            _ => Ok(()),
        }
    }
}

/// Every per-time scalar of the bridge.
///
/// The last four fields are conveniences for drift and control formulas that
/// need the instantaneous rate and the penalty alongside the integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct BridgeCoeffs {
    pub t: f64,
    pub theta_bar_t: f64,
    pub theta_bar_tT: f64,
    pub sigma2_t: f64,
    pub sigma2_tT: f64,
    pub sigma_prime2_t: f64,
    pub xi_t: f64,
    pub kappa_t: f64,
    pub rho_t: f64,
    /// `+∞` at `t = 0`; `-∞` at `t = T` when `γ = ∞`.
    pub beta_t: f64,
    pub theta_t: f64,
    /// Squared diffusion `g_t² = 2λ²θ_t`.
    pub g2_t: f64,
    pub gamma_inv: f64,
    pub lambda2: f64,
}

/// A validated schedule with its cached cumulative table.
#[derive(Debug, Clone)]
pub struct Schedule {
    params: ScheduleParams,
    scale: f64,
    theta_bar_total: f64,
    table: Option<Arc<CumulativeTable>>,
}

impl Schedule {
    pub fn new(params: ScheduleParams) -> Result<Self> {
        params.validate()?;
        let horizon = params.horizon;
        let raw_total = match params.kind {
            ScheduleKind::Constant { theta0 } => theta0 * horizon,
            ScheduleKind::FlippedCosine { offset } => {
                adaptive_simpson(&|t| raw_cosine(t, horizon, offset), 0.0, horizon, 1e-15)
            }
        };
        let scale = match params.normalization {
            Normalization::Scale(s) => s,
            Normalization::TerminalDecay { value, convention } => {
                let target = match convention {
                    TerminalConvention::NegativeExponent => -value.ln(),
                    TerminalConvention::Literal => value.ln(),
                };
                target / raw_total
            }
        };
        let (table, theta_bar_total) = match params.kind {
            ScheduleKind::Constant { .. } => (None, scale * raw_total),
            ScheduleKind::FlippedCosine { offset } => {
                let rate = |t: f64| scale * raw_cosine(t, horizon, offset);
                let table = CumulativeTable::build(&rate, horizon, TABLE_KNOTS, 1e-15);
                let total = table.total();
                (Some(Arc::new(table)), total)
            }
        };
        Ok(Self {
            params,
            scale,
            theta_bar_total,
            table,
        })
    }

    pub fn params(&self) -> &ScheduleParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    pub fn lambda2(&self) -> f64 {
        self.params.lambda2
    }

    pub fn gamma(&self) -> Gamma {
        self.params.gamma
    }

    pub fn theta_scale(&self) -> f64 {
        self.scale
    }

    /// `e^{-θ̄_T}` after scaling.
    pub fn terminal_decay(&self) -> f64 {
        (-self.theta_bar_total).exp()
    }

    /// Same schedule with a different penalty; reuses the table.
    pub fn with_gamma(&self, gamma: Gamma) -> Result<Self> {
        let mut params = self.params.clone();
        params.gamma = gamma;
        params.validate()?;
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    /// The lower clamp `ε = 1e-5·T`.
    pub fn clamp_eps(&self) -> f64 {
        CLAMP_FRACTION * self.params.horizon
    }

    /// Upper end of the β-space window: `T`, or `T - ε` when `β_T = -∞`.
    pub fn beta_upper_time(&self) -> f64 {
        if self.params.gamma.is_infinite() {
            self.params.horizon - self.clamp_eps()
        } else {
            self.params.horizon
        }
    }

    fn check_time(&self, what: &'static str, t: f64) -> Result<()> {
        if t.is_nan() || t < 0.0 || t > self.params.horizon {
            return Err(domain(what, t, format!("[0, {}]", self.params.horizon)));
        }
        Ok(())
    }

    /// Instantaneous rate `θ_t`.
    pub fn theta(&self, t: f64) -> Result<f64> {
        self.check_time("t", t)?;
        Ok(self.theta_unchecked(t))
    }

    pub(crate) fn theta_unchecked(&self, t: f64) -> f64 {
        match self.params.kind {
            ScheduleKind::Constant { theta0 } => self.scale * theta0,
            ScheduleKind::FlippedCosine { offset } => {
                self.scale * raw_cosine(t, self.params.horizon, offset)
            }
        }
    }

    /// `θ̄_{t0:t1} = ∫_{t0}^{t1} θ_z dz`.
    pub fn theta_bar(&self, t0: f64, t1: f64) -> Result<f64> {
        self.check_time("t0", t0)?;
        self.check_time("t1", t1)?;
        if t0 > t1 {
            return Err(domain("t0", t0, format!("[0, t1 = {t1}]")));
        }
        Ok(self.theta_bar_unchecked(t0, t1))
    }

    pub(crate) fn theta_bar_unchecked(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        match (&self.params.kind, &self.table) {
            (ScheduleKind::FlippedCosine { .. }, Some(table)) => {
                let horizon = self.params.horizon;
                if t1 - t0 <= horizon / TABLE_KNOTS as f64 {
                    return self.theta_bar_adaptive_unchecked(t0, t1);
                }
                if t0 == 0.0 {
                    return table.forward(t1);
                }
                if t1 == horizon {
                    return table.backward(t0);
                }
                let mid = 0.5 * horizon;
                if t1 <= mid {
                    table.forward(t1) - table.forward(t0)
                } else if t0 >= mid {
                    table.backward(t0) - table.backward(t1)
                } else {
                    (table.forward(mid) - table.forward(t0))
                        + (table.backward(mid) - table.backward(t1))
                }
            }
            _ => self.theta_unchecked(0.0) * (t1 - t0),
        }
    }

    /// `θ̄` by direct adaptive quadrature, bypassing the table.
    pub fn theta_bar_adaptive(&self, t0: f64, t1: f64) -> Result<f64> {
        self.check_time("t0", t0)?;
        self.check_time("t1", t1)?;
        if t0 > t1 {
            return Err(domain("t0", t0, format!("[0, t1 = {t1}]")));
        }
        Ok(self.theta_bar_adaptive_unchecked(t0, t1))
    }

    fn theta_bar_adaptive_unchecked(&self, t0: f64, t1: f64) -> f64 {
        match self.params.kind {
            ScheduleKind::Constant { .. } => self.theta_unchecked(0.0) * (t1 - t0),
            ScheduleKind::FlippedCosine { .. } => {
                adaptive_simpson(&|t| self.theta_unchecked(t), t0, t1, QUADRATURE_TOL)
            }
        }
    }

    /// `θ̄_t` anchored at the origin.
    fn acc_from_origin(&self, t: f64) -> f64 {
        match &self.table {
            Some(table) => table.forward(t),
            None => self.theta_unchecked(0.0) * t,
        }
    }

    /// `θ̄_{t:T}` anchored at the horizon.
    fn acc_to_horizon(&self, t: f64) -> f64 {
        match &self.table {
            Some(table) => table.backward(t),
            None => self.theta_unchecked(0.0) * (self.params.horizon - t),
        }
    }

    /// `θ̄_T`.
    pub fn theta_bar_total(&self) -> f64 {
        self.theta_bar_total
    }

    pub fn coeffs(&self, t: f64) -> Result<BridgeCoeffs> {
        self.check_time("t", t)?;
        Ok(self.coeffs_unchecked(t))
    }

    #[allow(non_snake_case)]
    pub(crate) fn coeffs_unchecked(&self, t: f64) -> BridgeCoeffs {
        let lambda2 = self.params.lambda2;
        let gamma_inv = self.params.gamma.inverse();
        let eps_gamma = gamma_inv / lambda2;

        let a = self.acc_from_origin(t);
        let u = self.acc_to_horizon(t);
        let total = self.theta_bar_total;
        let one_m_a = -(-2.0 * a).exp_m1();
        let one_m_u = -(-2.0 * u).exp_m1();
        let one_m_total = -(-2.0 * total).exp_m1();

        let sigma2_t = lambda2 * one_m_a;
        let sigma2_tT = lambda2 * one_m_u;
        let sigma2_T = lambda2 * one_m_total;
        let sigma_prime2_t = sigma2_t * one_m_u / one_m_total;
        let xi_t = (-a).exp() * (gamma_inv + sigma2_tT) / (gamma_inv + sigma2_T);
        let kappa_t = u.exp() * (eps_gamma + one_m_u);
        let rho_t = a.exp() * one_m_a;
        let beta_t = if rho_t == 0.0 {
            f64::INFINITY
        } else if kappa_t == 0.0 {
            f64::NEG_INFINITY
        } else {
            (kappa_t / rho_t).ln()
        };
        let theta_t = self.theta_unchecked(t);

        BridgeCoeffs {
            t,
            theta_bar_t: a,
            theta_bar_tT: u,
            sigma2_t,
            sigma2_tT,
            sigma_prime2_t,
            xi_t,
            kappa_t,
            rho_t,
            beta_t,
            theta_t,
            g2_t: 2.0 * lambda2 * theta_t,
            gamma_inv,
            lambda2,
        }
    }

    /// `(κ_t, ρ_t)` without the rest of the record.
    pub(crate) fn kappa_rho(&self, t: f64) -> (f64, f64) {
        let eps_gamma = self.params.gamma.inverse() / self.params.lambda2;
        let a = self.acc_from_origin(t);
        let u = self.acc_to_horizon(t);
        let kappa = u.exp() * (eps_gamma - (-2.0 * u).exp_m1());
        let rho = -a.exp() * (-2.0 * a).exp_m1();
        (kappa, rho)
    }

    /// `ρ_T`.
    pub fn rho_terminal(&self) -> f64 {
        let total = self.theta_bar_total;
        -total.exp() * (-2.0 * total).exp_m1()
    }

    /// `β` at `t` clamped into `[ε, beta_upper_time]`; always finite.
    pub fn beta_clamped(&self, t: f64) -> f64 {
        let tc = t.clamp(self.clamp_eps(), self.beta_upper_time());
        let (kappa, rho) = self.kappa_rho(tc);
        (kappa / rho).ln()
    }

    /// Admissible β window `[β(beta_upper_time), β(ε)]`.
    pub fn beta_range(&self) -> (f64, f64) {
        (
            self.beta_clamped(self.beta_upper_time()),
            self.beta_clamped(self.clamp_eps()),
        )
    }

    /// Inverse of the strictly decreasing map `t ↦ β_t`, by bisection.
    pub fn t_of_beta(&self, beta: f64) -> Result<f64> {
        let (lo_beta, hi_beta) = self.beta_range();
        let slack = 1e-12 * beta.abs().max(1.0);
        if beta.is_nan() || beta < lo_beta - slack || beta > hi_beta + slack {
            return Err(domain("beta", beta, format!("[{lo_beta}, {hi_beta}]")));
        }
        let tol = 1e-12 * beta.abs().max(1.0);
        // `lo` has the larger β.
        let (mut lo, mut hi) = (self.clamp_eps(), self.beta_upper_time());
        if beta >= hi_beta {
            return Ok(lo);
        }
        if beta <= lo_beta {
            return Ok(hi);
        }
        let mut best = (f64::INFINITY, lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let b = self.beta_clamped(mid);
            let err = (b - beta).abs();
            if err < best.0 {
                best = (err, mid);
            }
            if err <= tol {
                break;
            }
            if b > beta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(best.1)
    }

    /// Reverse-step noise scale of the data parameterization, `δ^d_{s:t}`.
    ///
    /// Evaluated as `λ²·expm1(2θ̄_t)·expm1(2θ̄_{t:s})/expm1(2θ̄_s)` under the
    /// root, which equals the textbook form but never cancels.
    pub fn delta_d(&self, s: f64, t: f64) -> Result<f64> {
        self.check_time("s", s)?;
        self.check_time("t", t)?;
        if t > s {
            return Err(domain("t", t, format!("[0, s = {s}]")));
        }
        Ok(self.delta_d_unchecked(s, t))
    }

    pub(crate) fn delta_d_unchecked(&self, s: f64, t: f64) -> f64 {
        if t >= s || t <= 0.0 {
            return 0.0;
        }
        let a_t = self.acc_from_origin(t);
        let a_s = self.acc_from_origin(s);
        let gap = self.theta_bar_unchecked(t, s);
        let v = self.params.lambda2 * (2.0 * a_t).exp_m1() * (2.0 * gap).exp_m1()
            / (2.0 * a_s).exp_m1();
        v.max(0.0).sqrt()
    }

    /// Reverse-step noise scale of the noise parameterization, `δⁿ_{s:t}`.
    ///
    /// Returns `+∞` for `s = T` under `γ = ∞`, where the first reciprocal
    /// blows up; callers clamp the starting node instead.
    pub fn delta_n(&self, s: f64, t: f64) -> Result<f64> {
        self.check_time("s", s)?;
        self.check_time("t", t)?;
        if t > s {
            return Err(domain("t", t, format!("[0, s = {s}]")));
        }
        Ok(self.delta_n_unchecked(s, t))
    }

    pub(crate) fn delta_n_unchecked(&self, s: f64, t: f64) -> f64 {
        if t >= s {
            return 0.0;
        }
        let lambda2 = self.params.lambda2;
        let eps_gamma = self.params.gamma.inverse() / lambda2;
        let u_s = self.acc_to_horizon(s);
        let u_t = self.acc_to_horizon(t);
        let c_s = eps_gamma - (-2.0 * u_s).exp_m1();
        if c_s == 0.0 {
            return f64::INFINITY;
        }
        let c_t = eps_gamma - (-2.0 * u_t).exp_m1();
        let gap = self.theta_bar_unchecked(t, s);
        let diff = (-2.0 * u_s).exp() * -(-2.0 * gap).exp_m1();
        let kappa_t = u_t.exp() * c_t;
        lambda2.sqrt() * kappa_t * (diff / (c_s * c_t)).max(0.0).sqrt()
    }
}

fn raw_cosine(t: f64, horizon: f64, offset: f64) -> f64 {
    let phase = |x: f64| ((x + offset) / (1.0 + offset)) * FRAC_PI_2;
    let num = phase(t / horizon).cos();
    let den = phase(0.0).cos();
    (1.0 - (num * num) / (den * den)).max(0.0)
}
