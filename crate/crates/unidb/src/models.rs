//! Prediction models in data or noise parameterization, the conversion
//! between them, and analytic oracles that stand in for trained networks.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::schedule::{BridgeCoeffs, Schedule};
use crate::state::StateVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    /// Predicts the clean endpoint `x̂_0`.
    Data,
    /// Predicts the standardized noise `ε̂`.
    Noise,
}

/// The raw function behind a [`PredictionModel`].
pub trait Denoiser: Send + Sync {
    fn parameterization(&self) -> Parameterization;

    /// Prediction in the model's own parameterization at `c.t`.
    fn predict(&self, x_t: &StateVec, x_terminal: &StateVec, c: &BridgeCoeffs) -> Result<StateVec>;
}

/// `x̂_0 = (x_t − (1−ξ_t)x_T − σ̄′_t ε) / ξ_t`.
pub fn data_from_noise(
    c: &BridgeCoeffs,
    x_t: &StateVec,
    x_terminal: &StateVec,
    eps: &StateVec,
) -> Result<StateVec> {
    if c.xi_t == 0.0 {
        return Err(Error::SingularConversion {
            t: c.t,
            reason: "ξ_t = 0",
        });
    }
    let inv = 1.0 / c.xi_t;
    StateVec::combine(&[
        (inv, x_t),
        (-(1.0 - c.xi_t) * inv, x_terminal),
        (-c.sigma_prime2_t.sqrt() * inv, eps),
    ])
}

/// `ε̂ = (x_t − (1−ξ_t)x_T − ξ_t x̂_0) / σ̄′_t`.
pub fn noise_from_data(
    c: &BridgeCoeffs,
    x_t: &StateVec,
    x_terminal: &StateVec,
    x0hat: &StateVec,
) -> Result<StateVec> {
    if c.sigma_prime2_t <= 0.0 {
        return Err(Error::SingularConversion {
            t: c.t,
            reason: "σ̄′_t = 0",
        });
    }
    let inv = 1.0 / c.sigma_prime2_t.sqrt();
    StateVec::combine(&[
        (inv, x_t),
        (-(1.0 - c.xi_t) * inv, x_terminal),
        (-c.xi_t * inv, x0hat),
    ])
}

/// Wraps a [`Denoiser`] and counts every evaluation.
pub struct PredictionModel {
    inner: Box<dyn Denoiser>,
    evals: AtomicU64,
}

impl PredictionModel {
    pub fn new(inner: impl Denoiser + 'static) -> Self {
        Self {
            inner: Box::new(inner),
            evals: AtomicU64::new(0),
        }
    }

    pub fn oracle(spec: OracleSpec, schedule: &Schedule) -> Result<Self> {
        Ok(Self::new(Oracle::new(spec, schedule)?))
    }

    pub fn parameterization(&self) -> Parameterization {
        self.inner.parameterization()
    }

    pub fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn predict_data(
        &self,
        x_t: &StateVec,
        x_terminal: &StateVec,
        c: &BridgeCoeffs,
    ) -> Result<StateVec> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        let raw = self.inner.predict(x_t, x_terminal, c)?;
        match self.inner.parameterization() {
            Parameterization::Data => Ok(raw),
            Parameterization::Noise => data_from_noise(c, x_t, x_terminal, &raw),
        }
    }

    pub fn predict_noise(
        &self,
        x_t: &StateVec,
        x_terminal: &StateVec,
        c: &BridgeCoeffs,
    ) -> Result<StateVec> {
        self.evals.fetch_add(1, Ordering::Relaxed);
        let raw = self.inner.predict(x_t, x_terminal, c)?;
        match self.inner.parameterization() {
            Parameterization::Noise => Ok(raw),
            Parameterization::Data => noise_from_data(c, x_t, x_terminal, &raw),
        }
    }
}

impl std::fmt::Debug for PredictionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PredictionModel")
            .field("parameterization", &self.parameterization())
            .field("evals", &self.eval_count())
            .finish()
    }
}

/// Analytic stand-ins for a trained data-prediction network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleSpec {
    /// All data mass at `x0`.
    PointMass { x0: f64 },
    /// Independent `N(mean, var)` prior per coordinate.
    GaussianPrior { mean: f64, var: f64 },
    /// Always predicts `c`.
    Constant { c: f64 },
    /// Predicts `a + b·β_t`, ignoring the state.
    AffineInBeta { a: f64, b: f64 },
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |key, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    key,
                    reason: "must be finite".into(),
                })
            }
        };
        match *self {
            OracleSpec::PointMass { x0 } => finite("x0", x0),
            OracleSpec::GaussianPrior { mean, var } => {
                finite("mean", mean)?;
                if var.is_finite() && var > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter {
                        key: "var",
                        reason: "prior variance must be positive".into(),
                    })
                }
            }
            OracleSpec::Constant { c } => finite("c", c),
            OracleSpec::AffineInBeta { a, b } => finite("a", a).and(finite("b", b)),
        }
    }

    /// Exact `E[x_0 | x_T]`, the error target of sampling runs.
    pub fn posterior_mean_target(&self) -> Option<f64> {
        match *self {
            OracleSpec::PointMass { x0 } => Some(x0),
            OracleSpec::GaussianPrior { mean, .. } => Some(mean),
            OracleSpec::Constant { c } => Some(c),
            OracleSpec::AffineInBeta { .. } => None,
        }
    }
}

/// Conjugate posterior mean `E[x_0 | x_t, x_T]` under a Gaussian prior.
pub fn ideal_gaussian_denoiser(
    mean: f64,
    var: f64,
    c: &BridgeCoeffs,
    x_t: &StateVec,
    x_terminal: &StateVec,
) -> Result<StateVec> {
    let xi = c.xi_t;
    let s2 = c.sigma_prime2_t;
    let denom = xi * xi * var + s2;
    if denom == 0.0 {
        // Only at the Doob horizon: the observation carries no information.
        x_t.check_dim(x_terminal)?;
        return Ok(StateVec::filled(x_t.dim(), mean));
    }
    x_t.zip_map(x_terminal, |x, y| {
        (xi * var * (x - (1.0 - xi) * y) + s2 * mean) / denom
    })
}

/// `a + b·β_t` per coordinate; defined only where β is finite and `t ≥ ε`.
pub fn affine_in_beta_model(
    a: f64,
    b: f64,
    c: &BridgeCoeffs,
    min_time: f64,
    dim: usize,
) -> Result<StateVec> {
    if c.t < min_time || !c.beta_t.is_finite() {
        return Err(domain("t", c.t, format!("[{min_time}, T] with finite β")));
    }
    Ok(StateVec::filled(dim, a + b * c.beta_t))
}

/// An [`OracleSpec`] bound to the clamp of a schedule.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    spec: OracleSpec,
    min_time: f64,
}

impl Oracle {
    pub fn new(spec: OracleSpec, schedule: &Schedule) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            min_time: schedule.clamp_eps(),
        })
    }

    pub fn spec(&self) -> OracleSpec {
        self.spec
    }
}

impl Denoiser for Oracle {
    fn parameterization(&self) -> Parameterization {
        Parameterization::Data
    }

    fn predict(&self, x_t: &StateVec, x_terminal: &StateVec, c: &BridgeCoeffs) -> Result<StateVec> {
        x_t.check_dim(x_terminal)?;
        let d = x_t.dim();
        match self.spec {
            OracleSpec::PointMass { x0 } => Ok(StateVec::filled(d, x0)),
            OracleSpec::Constant { c } => Ok(StateVec::filled(d, c)),
            OracleSpec::GaussianPrior { mean, var } => {
                ideal_gaussian_denoiser(mean, var, c, x_t, x_terminal)
            }
            OracleSpec::AffineInBeta { a, b } => affine_in_beta_model(a, b, c, self.min_time, d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{Gamma, ScheduleParams};

    fn schedule() -> Schedule {
        Schedule::new(ScheduleParams::constant(1.0, 1.0, 1.0, Gamma::Finite(10.0))).unwrap()
    }

    #[test]
    fn conversion_at_origin_returns_state() {
        let s = schedule();
        let c = s.coeffs(0.0).unwrap();
        let x = StateVec::from(0.25);
        let out = data_from_noise(&c, &x, &StateVec::from(9.0), &StateVec::from(0.0)).unwrap();
        assert_eq!(out, x);
        assert!(noise_from_data(&c, &x, &x, &x).is_err());
    }

    #[test]
    fn every_prediction_counts_once() {
        let s = schedule();
        let m = PredictionModel::oracle(OracleSpec::Constant { c: 1.0 }, &s).unwrap();
        let c = s.coeffs(0.5).unwrap();
        let x = StateVec::from(0.0);
        m.predict_data(&x, &x, &c).unwrap();
        m.predict_noise(&x, &x, &c).unwrap();
        assert_eq!(m.eval_count(), 2);
    }

    #[test]
    fn degenerate_prior_returns_prior_mean() {
        let s = schedule();
        let c = s.coeffs(0.5).unwrap();
        let out =
            ideal_gaussian_denoiser(0.3, 1e-300, &c, &StateVec::from(5.0), &StateVec::from(1.0))
                .unwrap();
        assert!((out[0] - 0.3).abs() < 1e-12);
        let c0 = s.coeffs(0.0).unwrap();
        let out0 =
            ideal_gaussian_denoiser(0.3, 2.0, &c0, &StateVec::from(5.0), &StateVec::from(1.0))
                .unwrap();
        assert_eq!(out0[0], 5.0);
    }

    #[test]
    fn affine_model_is_linear_in_beta_and_rejects_origin() {
        let s = schedule();
        let (c1, c2) = (s.coeffs(0.2).unwrap(), s.coeffs(0.7).unwrap());
        let v1 = affine_in_beta_model(1.0, 0.5, &c1, s.clamp_eps(), 1).unwrap()[0];
        let v2 = affine_in_beta_model(1.0, 0.5, &c2, s.clamp_eps(), 1).unwrap()[0];
        assert!((v1 - v2 - 0.5 * (c1.beta_t - c2.beta_t)).abs() < 1e-14);
        let zero = s.coeffs(0.0).unwrap();
        assert!(affine_in_beta_model(1.0, 0.5, &zero, s.clamp_eps(), 1).is_err());
    }

    #[test]
    fn invalid_prior_variance_is_rejected() {
        assert!(OracleSpec::GaussianPrior {
            mean: 0.0,
            var: 0.0
        }
        .validate()
        .is_err());
    }
}
