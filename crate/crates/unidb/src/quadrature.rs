//! Adaptive Simpson integration and the cumulative knot table used for fast
//! lookups of the accumulated rate.

use std::f64::consts::PI;

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson with Richardson extrapolation, to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || m <= a || b <= m {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Running integral of a nonnegative rate on Chebyshev-spaced knots.
///
/// Both the forward integral `∫_0^t` and the backward integral `∫_t^T` are
/// stored so that lookups anchored at either end never cancel. Between knots
/// the integral is a cubic Hermite interpolant using the exact rate as slope.
#[derive(Debug, Clone)]
pub struct CumulativeTable {
    horizon: f64,
    knots: Vec<f64>,
    rate: Vec<f64>,
    forward: Vec<f64>,
    backward: Vec<f64>,
}

impl CumulativeTable {
    pub fn build<F: Fn(f64) -> f64>(f: &F, horizon: f64, n_knots: usize, tol: f64) -> Self {
        assert!(n_knots >= 2, "table needs at least two knots");
        let last = (n_knots - 1) as f64;
        let mut knots: Vec<f64> = (0..n_knots)
            .map(|k| 0.5 * horizon * (1.0 - (PI * k as f64 / last).cos()))
            .collect();
        knots[0] = 0.0;
        knots[n_knots - 1] = horizon;
        for k in 1..n_knots {
            if knots[k] < knots[k - 1] {
                knots[k] = knots[k - 1];
            }
        }

        let pieces: Vec<f64> = knots
            .windows(2)
            .map(|w| adaptive_simpson(f, w[0], w[1], tol))
            .collect();
        let forward = neumaier_prefix(pieces.iter().copied());
        let mut backward = neumaier_prefix(pieces.iter().rev().copied());
        backward.reverse();
        let rate = knots.iter().map(|&t| f(t)).collect();

        Self {
            horizon,
            knots,
            rate,
            forward,
            backward,
        }
    }

    pub fn total(&self) -> f64 {
        self.forward[self.forward.len() - 1]
    }

    /// `∫_0^t`.
    pub fn forward(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.horizon {
            return self.total();
        }
        let k = self.locate(t);
        let h = self.knots[k + 1] - self.knots[k];
        let v = hermite(
            (t - self.knots[k]) / h,
            h,
            self.forward[k],
            self.forward[k + 1],
            self.rate[k],
            self.rate[k + 1],
        );
        v.clamp(self.forward[k], self.forward[k + 1])
    }

    /// `∫_t^T`.
    pub fn backward(&self, t: f64) -> f64 {
        if t >= self.horizon {
            return 0.0;
        }
        if t <= 0.0 {
            return self.backward[0];
        }
        let k = self.locate(t);
        let h = self.knots[k + 1] - self.knots[k];
        let v = hermite(
            (t - self.knots[k]) / h,
            h,
            self.backward[k],
            self.backward[k + 1],
            -self.rate[k],
            -self.rate[k + 1],
        );
        v.clamp(self.backward[k + 1], self.backward[k])
    }

    /// Index `k` with `knots[k] <= t < knots[k + 1]`.
    fn locate(&self, t: f64) -> usize {
        let last = self.knots.len() - 1;
        let guess = ((1.0 - 2.0 * t / self.horizon).clamp(-1.0, 1.0).acos() / PI * last as f64)
            .floor() as usize;
        let mut k = guess.min(last - 1);
        while k > 0 && self.knots[k] > t {
            k -= 1;
        }
        while k + 1 < last && self.knots[k + 1] <= t {
            k += 1;
        }
        k
    }
}

fn hermite(u: f64, h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
}

/// Compensated prefix sums, starting with 0.
fn neumaier_prefix(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        out.push(sum + comp);
    }
    out
}
