use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::coeffs::LimitMode;
use super::corrector::{BChoice, CorrectorForm};
use crate::error::{Error, Result};
use crate::models::Parameterization;
use crate::schedule::Schedule;

/// Decreasing time nodes `t_0 > t_1 > … > t_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `M` equal steps from `T` down to exactly 0.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        Self::truncated(horizon, 0.0, steps)
    }

    /// `M` equal steps from `start` down to `end`.
    ///
    /// Used for exactness checks that must stay inside the finite β window.
    pub fn truncated(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("at least one step is required".into()));
        }
        if !(start > end && end >= 0.0 && start.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "need start > end >= 0, got {start} and {end}"
            )));
        }
        let m = steps as f64;
        let mut times: Vec<f64> = (0..=steps)
            .map(|i| start - (start - end) * i as f64 / m)
            .collect();
        times[0] = start;
        times[steps] = end;
        Self::from_times(times)
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid("at least two nodes are required".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidGrid(
                "nodes must be finite and nonnegative".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidGrid(
                "nodes must be strictly decreasing".into(),
            ));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub(crate) fn check_against(&self, schedule: &Schedule) -> Result<()> {
        if self.times[0] > schedule.horizon() {
            return Err(Error::InvalidGrid(format!(
                "first node {} exceeds the horizon {}",
                self.times[0],
                schedule.horizon()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Euler,
    Unidbpp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    Sde,
    MeanOde,
}

impl Process {
    pub fn as_str(self) -> &'static str {
        match self {
            Process::Sde => "sde",
            Process::MeanOde => "mean_ode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepping {
    /// Forward difference through an extra evaluation at `β_s + r·h`.
    Singlestep { r: f64 },
    /// Backward difference through the previous node.
    Multistep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    First,
    Second(Stepping),
}

impl Order {
    pub fn number(self) -> u32 {
        match self {
            Order::First => 1,
            Order::Second(_) => 2,
        }
    }
}

/// Corrector settings; its order `k` is the length of `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSpec {
    pub r: Vec<f64>,
    pub b: BChoice,
    pub form: CorrectorForm,
}

impl Default for CorrectorSpec {
    fn default() -> Self {
        Self {
            r: vec![1.0],
            b: BChoice::Linear,
            form: CorrectorForm::Display,
        }
    }
}

impl CorrectorSpec {
    pub fn order(&self) -> usize {
        self.r.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSampler(m.to_string()));
        if self.r.is_empty() {
            return bad("corrector needs at least one r value");
        }
        if self.r.last() != Some(&1.0) {
            return bad("corrector r sequence must end at 1");
        }
        if self.r[0] <= 0.0 || self.r.windows(2).any(|w| w[1] <= w[0]) {
            return bad("corrector r sequence must be positive and strictly increasing");
        }
        Ok(())
    }
}

/// Full variant selector for one sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub family: Family,
    pub process: Process,
    pub parameterization: Parameterization,
    pub order: Order,
    pub corrector: Option<CorrectorSpec>,
    pub limit: LimitMode,
}

pub const DEFAULT_SINGLESTEP_R: f64 = 0.5;

impl SamplerSpec {
    pub fn euler(process: Process) -> Self {
        Self {
            family: Family::Euler,
            process,
            parameterization: Parameterization::Data,
            order: Order::First,
            corrector: None,
            limit: LimitMode::Unidb,
        }
    }

    pub fn unidbpp(process: Process) -> Self {
        Self {
            family: Family::Unidbpp,
            ..Self::euler(process)
        }
    }

    pub fn with_order(mut self, order: Order) -> Self {
        self.order = order;
        self
    }

    pub fn with_parameterization(mut self, p: Parameterization) -> Self {
        self.parameterization = p;
        self
    }

    pub fn with_corrector(mut self, c: CorrectorSpec) -> Self {
        self.corrector = Some(c);
        self
    }

    pub fn with_limit(mut self, limit: LimitMode) -> Self {
        self.limit = limit;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSampler(m.to_string()));
        if let Order::Second(stepping) = self.order {
            if self.family == Family::Euler {
                return bad("the Euler baseline is first order only");
            }
            if let Stepping::Singlestep { r } = stepping {
                if !(r > 0.0 && r < 1.0) {
                    return bad("singlestep r must lie in (0, 1)");
                }
            }
        }
        if let Some(c) = &self.corrector {
            if self.family != Family::Unidbpp || self.process != Process::Sde {
                return bad("the corrector needs the unidbpp family and the SDE process");
            }
            if self.order != Order::First || self.parameterization != Parameterization::Data {
                return bad("the corrector wraps the first-order data-parameterized predictor");
            }
            c.validate()?;
        }
        if self.limit.is_comparison_provider()
            && (self.family != Family::Unidbpp
                || self.order != Order::First
                || self.parameterization != Parameterization::Data
                || self.corrector.is_some())
        {
            return bad("DBIM and VE/VP providers only drive the plain first-order data step");
        }
        Ok(())
    }

    /// Model evaluations per step.
    pub fn evals_per_step(&self) -> usize {
        match (&self.corrector, self.order) {
            (Some(c), _) => 1 + c.order(),
            (None, Order::Second(Stepping::Singlestep { .. })) => 2,
            _ => 1,
        }
    }

    pub fn corrector_label(&self) -> String {
        match &self.corrector {
            None => "off".into(),
            Some(c) => {
                let mut s = format!("k{}", c.order());
                if c.form == CorrectorForm::Algorithm {
                    s.push_str("-alg");
                }
                if c.b == BChoice::ExpM1 {
                    s.push_str("-expb");
                }
                s
            }
        }
    }
}

/// Canonical identifier, e.g. `unidbpp-sde-data-o2s` or `euler-ode-noise-o1-goub`.
///
/// Tokens after the family may appear in any order when parsing:
/// `sde|ode`, `data|noise`, `o1|o2s|o2s@R|o2m`, `corr|corr2`, `alg`, `expb`,
/// and one limit mode `goub|dbimve|dbimvp|unidbve|unidbvp`.
impl fmt::Display for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = match self.family {
            Family::Euler => "euler",
            Family::Unidbpp => "unidbpp",
        };
        let process = match self.process {
            Process::Sde => "sde",
            Process::MeanOde => "ode",
        };
        let param = match self.parameterization {
            Parameterization::Data => "data",
            Parameterization::Noise => "noise",
        };
        write!(f, "{family}-{process}-{param}")?;
        match self.order {
            Order::First => f.write_str("-o1")?,
            Order::Second(Stepping::Multistep) => f.write_str("-o2m")?,
            Order::Second(Stepping::Singlestep { r }) if r == DEFAULT_SINGLESTEP_R => {
                f.write_str("-o2s")?
            }
            Order::Second(Stepping::Singlestep { r }) => write!(f, "-o2s@{r}")?,
        }
        if let Some(c) = &self.corrector {
            if c.r == [1.0] {
                f.write_str("-corr")?;
            } else if c.r == [0.5, 1.0] {
                f.write_str("-corr2")?;
            } else {
                let rs: Vec<String> = c.r.iter().map(|r| r.to_string()).collect();
                write!(f, "-corr@{}", rs.join(":"))?;
            }
            if c.form == CorrectorForm::Algorithm {
                f.write_str("-alg")?;
            }
            if c.b == BChoice::ExpM1 {
                f.write_str("-expb")?;
            }
        }
        if self.limit != LimitMode::Unidb {
            write!(f, "-{}", self.limit.token())?;
        }
        Ok(())
    }
}

impl FromStr for SamplerSpec {
    type Err = Error;

    fn from_str(id: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidSampler(m);
        let mut tokens = id.trim().split('-');
        let family = match tokens.next() {
            Some("euler") => Family::Euler,
            Some("unidbpp") => Family::Unidbpp,
            other => return Err(bad(format!("unknown sampler family {other:?} in `{id}`"))),
        };
        let mut spec = SamplerSpec::unidbpp(Process::Sde);
        spec.family = family;
        let mut corrector: Option<CorrectorSpec> = None;
        let (mut alg, mut expb) = (false, false);
        for tok in tokens {
            match tok {
                "sde" => spec.process = Process::Sde,
                "ode" => spec.process = Process::MeanOde,
                "data" => spec.parameterization = Parameterization::Data,
                "noise" => spec.parameterization = Parameterization::Noise,
                "o1" => spec.order = Order::First,
                "o2m" => spec.order = Order::Second(Stepping::Multistep),
                "o2s" => {
                    spec.order = Order::Second(Stepping::Singlestep {
                        r: DEFAULT_SINGLESTEP_R,
                    })
                }
                "corr" => corrector = Some(CorrectorSpec::default()),
                "corr2" => {
                    corrector = Some(CorrectorSpec {
                        r: vec![0.5, 1.0],
                        ..CorrectorSpec::default()
                    })
                }
                "alg" => alg = true,
                "expb" => expb = true,
                t if t.starts_with("o2s@") => {
                    let r: f64 = t[4..]
                        .parse()
                        .map_err(|_| bad(format!("bad singlestep ratio in `{id}`")))?;
                    spec.order = Order::Second(Stepping::Singlestep { r });
                }
                t if t.starts_with("corr@") => {
                    let r = t[5..]
                        .split(':')
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("bad corrector sequence in `{id}`")))?;
                    corrector = Some(CorrectorSpec {
                        r,
                        ..CorrectorSpec::default()
                    });
                }
                t => match LimitMode::from_token(t) {
                    Some(mode) => spec.limit = mode,
                    None => return Err(bad(format!("unknown token `{t}` in `{id}`"))),
                },
            }
        }
        if let Some(c) = corrector.as_mut() {
            if alg {
                c.form = CorrectorForm::Algorithm;
            }
            if expb {
                c.b = BChoice::ExpM1;
            }
        } else if alg || expb {
            return Err(bad(format!("`alg`/`expb` need a corrector in `{id}`")));
        }
        spec.corrector = corrector;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints_are_exact() {
        let g = TimeGrid::uniform(1.0, 7).unwrap();
        assert_eq!(g.times()[0], 1.0);
        assert_eq!(g.times()[7], 0.0);
        assert_eq!(g.steps(), 7);
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::from_times(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn ids_round_trip() {
        for id in [
            "euler-sde-data-o1",
            "euler-ode-noise-o1-goub",
            "unidbpp-sde-data-o2s",
            "unidbpp-ode-noise-o2m",
            "unidbpp-sde-data-o2s@0.3",
            "unidbpp-sde-data-o1-corr",
            "unidbpp-sde-data-o1-corr2-alg-expb",
            "unidbpp-ode-data-o1-dbimve",
        ] {
            let spec: SamplerSpec = id.parse().unwrap();
            assert_eq!(spec.to_string(), id);
        }
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!("euler-sde-data-o2s".parse::<SamplerSpec>().is_err());
        assert!("unidbpp-ode-data-o1-corr".parse::<SamplerSpec>().is_err());
        assert!("unidbpp-sde-data-o2s@1.5".parse::<SamplerSpec>().is_err());
        assert!("unidbpp-sde-noise-o1-dbimvp"
            .parse::<SamplerSpec>()
            .is_err());
        assert!("wat-sde".parse::<SamplerSpec>().is_err());
        assert!("unidbpp-sde-alg".parse::<SamplerSpec>().is_err());
    }

    #[test]
    fn evals_per_step_matches_accounting() {
        let c: SamplerSpec = "unidbpp-sde-data-o1-corr".parse().unwrap();
        assert_eq!(c.evals_per_step(), 2);
        let s: SamplerSpec = "unidbpp-sde-data-o2s".parse().unwrap();
        assert_eq!(s.evals_per_step(), 2);
        let m: SamplerSpec = "unidbpp-sde-data-o2m".parse().unwrap();
        assert_eq!(m.evals_per_step(), 1);
    }
}
