//! TOML configuration: every section is optional, unknown keys are errors,
//! and the parsed file converts into the library's parameter types.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use unidb::harness::{ExperimentSpec, ReferenceConfig, DEFAULT_NFE};
use unidb::models::OracleSpec;
use unidb::samplers::SamplerSpec;
use unidb::schedule::{
    Gamma, Normalization, ScheduleKind, ScheduleParams, TerminalConvention, DEFAULT_COSINE_OFFSET,
    DEFAULT_GAMMA, DEFAULT_LAMBDA2, DEFAULT_TERMINAL_DECAY,
};

/// A configuration problem; the CLI maps it to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub anyhow::Error);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub output: PathBuf,
    pub schedule: ScheduleSection,
    pub oracle: OracleSection,
    pub problem: ProblemSection,
    pub sampler: SamplerSection,
    pub grid: GridSection,
    pub sweep: SweepSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            output: PathBuf::from("results.csv"),
            schedule: ScheduleSection::default(),
            oracle: OracleSection::default(),
            problem: ProblemSection::default(),
            sampler: SamplerSection::default(),
            grid: GridSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKindName {
    FlippedCosine,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub kind: ScheduleKindName,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Offset `s` of the flipped cosine.
    pub s: f64,
    /// Rate of the constant schedule.
    pub theta0: f64,
    pub lambda2: f64,
    pub gamma: Gamma,
    pub terminal_decay: f64,
    pub terminal_convention: TerminalConvention,
    /// Fixed multiplier; when present it replaces the terminal normalization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_scale: Option<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            kind: ScheduleKindName::FlippedCosine,
            horizon: 1.0,
            s: DEFAULT_COSINE_OFFSET,
            theta0: 1.0,
            lambda2: DEFAULT_LAMBDA2,
            gamma: Gamma::Finite(DEFAULT_GAMMA),
            terminal_decay: DEFAULT_TERMINAL_DECAY,
            terminal_convention: TerminalConvention::NegativeExponent,
            theta_scale: None,
        }
    }
}

impl ScheduleSection {
    pub fn params(&self) -> anyhow::Result<ScheduleParams> {
        if let Gamma::Finite(g) = self.gamma {
            if !(g > 0.0) {
                bail!("schedule.gamma must be positive or \"inf\", got {g}");
            }
        }
        let kind = match self.kind {
            ScheduleKindName::FlippedCosine => ScheduleKind::FlippedCosine { offset: self.s },
            ScheduleKindName::Constant => ScheduleKind::Constant {
                theta0: self.theta0,
            },
        };
        let normalization = match self.theta_scale {
            Some(scale) => Normalization::Scale(scale),
            None => Normalization::TerminalDecay {
                value: self.terminal_decay,
                convention: self.terminal_convention,
            },
        };
        let params = ScheduleParams {
            kind,
            horizon: self.horizon,
            lambda2: self.lambda2,
            gamma: self.gamma,
            normalization,
        };
        params
            .validate()
            .map_err(|e| anyhow::anyhow!("schedule: {e}"))?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKindName {
    GaussianPrior,
    PointMass,
    Constant,
    AffineInBeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub kind: OracleKindName,
    /// Prior mean, point-mass location or constant value, depending on `kind`.
    pub mean: f64,
    pub var: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            kind: OracleKindName::GaussianPrior,
            mean: 0.0,
            var: 1.0,
            a: 0.0,
            b: 0.0,
        }
    }
}

impl OracleSection {
    pub fn spec(&self) -> anyhow::Result<OracleSpec> {
        let spec = match self.kind {
            OracleKindName::GaussianPrior => OracleSpec::GaussianPrior {
                mean: self.mean,
                var: self.var,
            },
            OracleKindName::PointMass => OracleSpec::PointMass { x0: self.mean },
            OracleKindName::Constant => OracleSpec::Constant { c: self.mean },
            OracleKindName::AffineInBeta => OracleSpec::AffineInBeta {
                a: self.a,
                b: self.b,
            },
        };
        spec.validate()
            .map_err(|e| anyhow::anyhow!("oracle: {e}"))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub dim: usize,
    pub x_terminal: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            dim: 1,
            x_terminal: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub ids: Vec<String>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            ids: vec!["euler-sde-data-o1".into(), "unidbpp-sde-data-o1".into()],
        }
    }
}

impl SamplerSection {
    pub fn specs(&self) -> anyhow::Result<Vec<SamplerSpec>> {
        if self.ids.is_empty() {
            bail!("sampler.ids must name at least one sampler");
        }
        self.ids
            .iter()
            .map(|id| {
                id.parse::<SamplerSpec>()
                    .map_err(|e| anyhow::anyhow!("sampler.ids: {e}"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub kind: GridKind,
    #[serde(rename = "M")]
    pub steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            kind: GridKind::Uniform,
            steps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub nfe: Vec<usize>,
    pub seeds: usize,
    pub reference_steps: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            nfe: DEFAULT_NFE.to_vec(),
            seeds: 8,
            reference_steps: ReferenceConfig::default().fine_steps,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError(anyhow::anyhow!("{e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads `path`, or the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))
                    .map_err(ConfigError)?;
                Self::parse(&text)
            }
        }
    }

    /// Validates every section without running anything.
    pub fn check(&self) -> Result<(), ConfigError> {
        self.schedule.params().map_err(ConfigError)?;
        self.oracle.spec().map_err(ConfigError)?;
        self.sampler.specs().map_err(ConfigError)?;
        if self.grid.steps == 0 {
            return Err(ConfigError(anyhow::anyhow!("grid.M must be at least 1")));
        }
        if self.problem.dim == 0 {
            return Err(ConfigError(anyhow::anyhow!(
                "problem.dim must be at least 1"
            )));
        }
        if !self.problem.x_terminal.is_finite() {
            return Err(ConfigError(anyhow::anyhow!(
                "problem.x_terminal must be finite"
            )));
        }
        self.experiment()
            .map_err(ConfigError)?
            .validate()
            .map_err(|e| ConfigError(e.into()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn experiment(&self) -> anyhow::Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            schedule: self.schedule.params()?,
            oracle: self.oracle.spec()?,
            dim: self.problem.dim,
            x_terminal: self.problem.x_terminal,
            samplers: self.sampler.specs()?,
            nfe: self.sweep.nfe.clone(),
            seeds: self.sweep.seeds,
            master_seed: self.seed,
            reference: ReferenceConfig {
                fine_steps: self.sweep.reference_steps,
            },
            record_timing: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let back = Config::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn infinite_gamma_is_spelled_inf() {
        let cfg = Config::parse("[schedule]\ngamma = \"inf\"\n").unwrap();
        assert_eq!(cfg.schedule.gamma, Gamma::Infinite);
        assert!(cfg.to_toml().contains("gamma = \"inf\""));
    }

    #[test]
    fn nonpositive_gamma_names_the_key() {
        let err = Config::parse("[schedule]\ngamma = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::parse("[schedule]\nlambda = 1.0\n").is_err());
        assert!(Config::parse("colour = 1\n").is_err());
        assert!(Config::parse("[extras]\nx = 1\n").is_err());
    }
}
