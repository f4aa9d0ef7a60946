//! Predictor–corrector step for the first-order data-parameterized SDE solver.

use serde::{Deserialize, Serialize};

use super::coeffs::step_coeffs_unchecked;
use super::exact::{apply_first_order, predict_at};
use super::run::NoiseStreams;
use super::spec::CorrectorSpec;
use super::{beta_step, check_step};
use crate::error::{Error, Result};
use crate::models::PredictionModel;
use crate::schedule::Schedule;
use crate::state::StateVec;

/// Normalizer `B(h)` of the corrector weights; any `O(h)` choice is admissible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BChoice {
    #[default]
    Linear,
    ExpM1,
}

impl BChoice {
    pub fn eval(self, h: f64) -> f64 {
        match self {
            BChoice::Linear => h,
            BChoice::ExpM1 => h.exp_m1(),
        }
    }
}

/// Which corrected update is used.
///
/// `Display` keeps the `x̂ᶜ_s` term and the `1/r_i` factors of the general
/// k-th order formula; `Algorithm` is the k = 1 pseudocode line, which has
/// neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectorForm {
    #[default]
    Display,
    Algorithm,
}

/// `φ_n(h)` for `n ≥ 1`.
///
/// Uses the recursion `φ_{n+1} = (1/n! − φ_n)/h` from `φ_1 = (1 − e^{-h})/h`,
/// switching to the power series `Σ_j (−h)^j/(j+n)!` for small `h` where the
/// recursion cancels.
pub fn phi(n: usize, h: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            key: "n",
            reason: "φ is indexed from 1".into(),
        });
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter {
            key: "h",
            reason: format!("must be positive and finite, got {h}"),
        });
    }
    if h < 0.25 {
        let mut fact: f64 = (1..=n).map(|k| k as f64).product();
        let mut power = 1.0;
        let mut sum = 0.0;
        for j in 0..40 {
            if j > 0 {
                power *= -h;
                fact *= (j + n) as f64;
            }
            sum += power / fact;
        }
        return Ok(sum);
    }
    let mut value = -(-h).exp_m1() / h;
    let mut fact = 1.0;
    for k in 1..n {
        fact *= k as f64;
        value = (1.0 / fact - value) / h;
    }
    Ok(value)
}

/// Solves `R c = g / B(h)` with `R_{ij} = (r_j h)^i` and `g_n = hⁿ n! φ_{n+1}(h)`.
pub fn corrector_coeffs(h: f64, r: &[f64], b: BChoice) -> Result<Vec<f64>> {
    let k = r.len();
    if k == 0 || r[k - 1] != 1.0 || r[0] <= 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSampler(
            "corrector r sequence must satisfy 0 < r_1 < … < r_k = 1".into(),
        ));
    }
    let bh = b.eval(h);
    let mut rhs = Vec::with_capacity(k);
    let mut fact = 1.0;
    for n in 1..=k {
        fact *= n as f64;
        rhs.push(h.powi(n as i32) * fact * phi(n + 1, h)? / bh);
    }
    let matrix: Vec<Vec<f64>> = (0..k)
        .map(|i| r.iter().map(|rj| (rj * h).powi(i as i32)).collect())
        .collect();
    solve_dense(matrix, rhs)
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= 1e-14 * scale {
            return Err(Error::SingularSystem(format!(
                "pivot {col} vanishes; duplicate r values?"
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (dst, src) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

/// One predictor–corrector step from the corrected state `xc_s`.
///
/// Returns `(x_t, xc_t)`: the first-order prediction and the corrected state
/// the run continues from. The predictor's noise comes from the primary
/// stream and the corrector's from the auxiliary one. For `k > 1` the interior
/// nodes `s_i` are reached by noise-free first-order steps.
#[allow(clippy::too_many_arguments)]
pub fn unidbpp_corrected_step(
    schedule: &Schedule,
    model: &PredictionModel,
    xc_s: &StateVec,
    x_terminal: &StateVec,
    s: f64,
    t: f64,
    corrector: &CorrectorSpec,
    noise: Option<&mut NoiseStreams>,
) -> Result<(StateVec, StateVec)> {
    check_step(schedule, s, t)?;
    xc_s.check_dim(x_terminal)?;
    corrector.validate()?;
    let h = beta_step(schedule, s, t);
    if !(h > 0.0) {
        return Err(Error::DegenerateStep(format!(
            "β step between s = {s} and t = {t} is {h}"
        )));
    }
    let weights = corrector_coeffs(h, &corrector.r, corrector.b)?;
    let bh = corrector.b.eval(h);
    let dim = xc_s.dim();
    let (z1, z2) = match noise {
        Some(n) => (
            Some(n.primary.normal_vec(dim)),
            Some(n.auxiliary.normal_vec(dim)),
        ),
        None => (None, None),
    };

    let x0hat_c = predict_at(schedule, model, xc_s, x_terminal, s)?;
    let c = step_coeffs_unchecked(schedule, s, t);
    let x_t = apply_first_order(&c, xc_s, x_terminal, &x0hat_c, z1.as_ref())?;

    let beta_s = schedule.beta_clamped(s);
    let mut diffs = Vec::with_capacity(weights.len());
    for &r in &corrector.r {
        let prediction = if r == 1.0 {
            predict_at(schedule, model, &x_t, x_terminal, t)?
        } else {
            let s_i = schedule
                .t_of_beta(beta_s + r * h)?
                .clamp(t.max(f64::MIN_POSITIVE), s);
            let inner = step_coeffs_unchecked(schedule, s, s_i);
            let x_i = apply_first_order(&inner, xc_s, x_terminal, &x0hat_c, None)?;
            predict_at(schedule, model, &x_i, x_terminal, s_i)?
        };
        diffs.push(prediction.zip_map(&x0hat_c, |a, b| a - b)?);
    }

    let (kappa_t, _) = schedule.kappa_rho(t);
    let lead = kappa_t / schedule.rho_terminal() * bh;
    let mut terms: Vec<(f64, &StateVec)> = vec![(c.on_prev, xc_s), (c.on_xt, x_terminal)];
    match corrector.form {
        CorrectorForm::Display => {
            terms.push((c.on_x0hat, &x0hat_c));
            for ((w, r), d) in weights.iter().zip(&corrector.r).zip(&diffs) {
                terms.push((lead * w / r, d));
            }
        }
        CorrectorForm::Algorithm => {
            for (w, d) in weights.iter().zip(&diffs) {
                terms.push((lead * w, d));
            }
        }
    }
    if let Some(z2) = z2.as_ref() {
        if c.noise_std > 0.0 {
            terms.push((c.noise_std, z2));
        }
    }
    let xc_t = StateVec::combine(&terms)?;
    Ok((x_t, xc_t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_closed_forms_at_one() {
        let e = (-1.0f64).exp();
        assert!((phi(1, 1.0).unwrap() - (1.0 - e)).abs() < 1e-15);
        assert!((phi(2, 1.0).unwrap() - e).abs() < 1e-15);
    }

    #[test]
    fn series_agrees_with_recursion_below_the_switch() {
        let h: f64 = 0.2;
        let mut value = -(-h).exp_m1() / h;
        let mut fact = 1.0;
        for n in 1..5 {
            assert!((phi(n, h).unwrap() - value).abs() < 1e-12, "n = {n}");
            fact *= n as f64;
            value = (1.0 / fact - value) / h;
        }
    }

    #[test]
    fn first_order_weight_tends_to_one_half() {
        let c = corrector_coeffs(1e-3, &[1.0], BChoice::Linear).unwrap();
        let series = 0.5 - 1e-3 / 6.0 + 1e-6 / 24.0;
        assert!((c[0] - series).abs() < 1e-6);
    }

    #[test]
    fn linear_choice_matches_closed_form() {
        let h: f64 = 0.8;
        let c = corrector_coeffs(h, &[1.0], BChoice::Linear).unwrap();
        let expect = (1.0 - (1.0 - (-h).exp()) / h) / h;
        assert!((c[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn invalid_sequences_are_rejected() {
        assert!(corrector_coeffs(0.5, &[0.5, 0.5, 1.0], BChoice::Linear).is_err());
        assert!(corrector_coeffs(0.5, &[0.5], BChoice::Linear).is_err());
        assert!(phi(1, 0.0).is_err());
    }
}
