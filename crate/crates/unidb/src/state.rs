//! Fixed-dimension real state vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `d`-dimensional state such as `x_t`, `x_0`, `x_T` or a noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVec(Vec<f64>);

impl StateVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter {
                key: "dim",
                reason: "state dimension must be at least 1".into(),
            });
        }
        Ok(Self(values))
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        assert!(dim >= 1, "state dimension must be at least 1");
        Self(vec![value; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Self::filled(dim, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_dim(&self, other: &StateVec) -> Result<()> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            })
        }
    }

    /// `Σ w_i · v_i` over equally sized vectors.
    pub fn combine(terms: &[(f64, &StateVec)]) -> Result<StateVec> {
        let (_, first) = terms.first().expect("at least one term");
        for (_, v) in &terms[1..] {
            first.check_dim(v)?;
        }
        let mut out = vec![0.0; first.dim()];
        for (w, v) in terms {
            if *w == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(v.as_slice()) {
                *o += w * x;
            }
        }
        Ok(StateVec(out))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StateVec {
        StateVec(self.0.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise `f(a_i, b_i)`.
    pub fn zip_map(&self, other: &StateVec, f: impl Fn(f64, f64) -> f64) -> Result<StateVec> {
        self.check_dim(other)?;
        Ok(StateVec(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> StateVec {
        self.map(|v| c * v)
    }

    /// Root-mean-square distance to `other`.
    pub fn rms_distance(&self, other: &StateVec) -> Result<f64> {
        self.check_dim(other)?;
        let ss: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((ss / self.dim() as f64).sqrt())
    }

    pub fn max_abs_diff(&self, other: &StateVec) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl From<f64> for StateVec {
    fn from(v: f64) -> Self {
        StateVec(vec![v])
    }
}

impl std::ops::Index<usize> for StateVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_is_linear() {
        let a = StateVec::new(vec![1.0, 2.0]).unwrap();
        let b = StateVec::new(vec![-1.0, 4.0]).unwrap();
        let c = StateVec::combine(&[(2.0, &a), (0.5, &b)]).unwrap();
        assert_eq!(c.as_slice(), &[1.5, 6.0]);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let a = StateVec::zeros(2);
        let b = StateVec::zeros(3);
        assert!(matches!(
            StateVec::combine(&[(1.0, &a), (1.0, &b)]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
        assert!(StateVec::new(vec![]).is_err());
    }
}
