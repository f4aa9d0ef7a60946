//! Seeded experiments on toy bridges: sweeps over samplers, step counts and
//! seeds, error metrics, convergence-order fits and result files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{OracleSpec, PredictionModel};
use crate::parallel::{map_indexed, Execution};
use crate::samplers::{
    run_sampler, LimitMode, NoiseStreams, Order, SamplerSpec, Stepping, TimeGrid,
};
use crate::schedule::{Schedule, ScheduleParams};
use crate::state::StateVec;

/// Settings of the high-resolution reference run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Steps of the fine first-order Mean-ODE reference.
    pub fine_steps: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { fine_steps: 4096 }
    }
}

/// A sweep over `samplers × nfe × seeds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub schedule: ScheduleParams,
    pub oracle: OracleSpec,
    pub dim: usize,
    /// Every coordinate of `x_T`.
    pub x_terminal: f64,
    pub samplers: Vec<SamplerSpec>,
    pub nfe: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    pub reference: ReferenceConfig,
    /// Record wall time; off keeps result files byte-reproducible.
    pub record_timing: bool,
}

pub const DEFAULT_NFE: [usize; 6] = [5, 10, 20, 25, 50, 100];

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            schedule: ScheduleParams::default(),
            oracle: OracleSpec::GaussianPrior {
                mean: 0.0,
                var: 1.0,
            },
            dim: 1,
            x_terminal: 1.0,
            samplers: vec![
                "euler-sde-data-o1".parse().expect("valid id"),
                "unidbpp-sde-data-o1".parse().expect("valid id"),
            ],
            nfe: DEFAULT_NFE.to_vec(),
            seeds: 8,
            master_seed: 0,
            reference: ReferenceConfig::default(),
            record_timing: false,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.oracle.validate()?;
        let bad = |key: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                key,
                reason: reason.into(),
            })
        };
        if self.dim == 0 {
            return bad("dim", "must be at least 1");
        }
        if !self.x_terminal.is_finite() {
            return bad("x_terminal", "must be finite");
        }
        if self.nfe.is_empty() || self.nfe.contains(&0) {
            return bad("nfe", "needs at least one value, all at least 1");
        }
        if self.seeds == 0 {
            return bad("seeds", "must be at least 1");
        }
        if self.samplers.is_empty() {
            return bad("samplers", "needs at least one sampler");
        }
        for s in &self.samplers {
            s.validate()?;
        }
        Ok(())
    }

    /// The analytic error target, one value per coordinate.
    pub fn target(&self) -> Result<StateVec> {
        let v = self
            .oracle
            .posterior_mean_target()
            .ok_or(Error::InvalidParameter {
                key: "oracle",
                reason: "this oracle has no analytic target".into(),
            })?;
        Ok(StateVec::filled(self.dim, v))
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sampler: String,
    pub process: String,
    pub order: String,
    pub corrector: String,
    pub gamma_mode: String,
    /// Number of steps `M`.
    pub nfe: usize,
    pub seed: u64,
    pub rmse: f64,
    pub wall_ms: f64,
    /// Model evaluations actually spent.
    pub evals: u64,
}

pub const CSV_HEADER: &str =
    "sampler,process,order,corrector,gamma_mode,nfe,seed,rmse,wall_ms,evals";

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub row: ResultRow,
    pub terminal: StateVec,
}

/// A run that could not complete; the rest of the sweep is unaffected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub sampler: String,
    pub nfe: usize,
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentOutput {
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutput {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.results.iter().map(|r| r.row.clone()).collect()
    }

    /// Mean RMSE of one sampler at one step count.
    pub fn mean_rmse(&self, sampler: &str, nfe: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .results
            .iter()
            .filter(|r| r.row.sampler == sampler && r.row.nfe == nfe)
            .map(|r| r.row.rmse)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn order_label(order: Order) -> &'static str {
    match order {
        Order::First => "1",
        Order::Second(Stepping::Singlestep { .. }) => "2s",
        Order::Second(Stepping::Multistep) => "2m",
    }
}

fn gamma_label(spec: &SamplerSpec, schedule: &Schedule) -> String {
    match spec.limit {
        LimitMode::Unidb => format!("unidb:{}", schedule.gamma()),
        other => other.name().to_string(),
    }
}

/// Runs the full Cartesian product, in parallel when `exec` allows.
///
/// Results come back sorted by sampler, step count and seed; each run uses
/// its own model instance and the noise streams of its seed index.
pub fn run_experiment(spec: &ExperimentSpec, exec: Execution) -> Result<ExperimentOutput> {
    spec.validate()?;
    let schedule = Schedule::new(spec.schedule.clone())?;
    let target = spec.target()?;
    let x_terminal = StateVec::filled(spec.dim, spec.x_terminal);

    let jobs: Vec<(usize, usize, u64)> = (0..spec.samplers.len())
        .flat_map(|i| {
            spec.nfe
                .iter()
                .flat_map(move |&m| (0..spec.seeds as u64).map(move |k| (i, m, k)))
        })
        .collect();

    let outcomes = map_indexed(jobs.len(), exec, |j| {
        let (i, m, seed) = jobs[j];
        let sampler = &spec.samplers[i];
        let id = sampler.to_string();
        let run = || -> Result<RunResult> {
            let model = PredictionModel::oracle(spec.oracle, &schedule)?;
            let grid = TimeGrid::uniform(schedule.horizon(), m)?;
            let mut noise = NoiseStreams::new(spec.master_seed, seed);
            let clock = Instant::now();
            let out = run_sampler(
                sampler,
                &schedule,
                &model,
                &x_terminal,
                &grid,
                Some(&mut noise),
            )?;
            let wall_ms = if spec.record_timing {
                clock.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            };
            let rmse = out.terminal.rms_distance(&target)?;
            Ok(RunResult {
                row: ResultRow {
                    sampler: id.clone(),
                    process: sampler.process.as_str().into(),
                    order: order_label(sampler.order).into(),
                    corrector: sampler.corrector_label(),
                    gamma_mode: gamma_label(sampler, &schedule),
                    nfe: m,
                    seed,
                    rmse,
                    wall_ms,
                    evals: out.evals,
                },
                terminal: out.terminal,
            })
        };
        run().map_err(|error| RunFailure {
            sampler: id.clone(),
            nfe: m,
            seed,
            error,
        })
    });

    let mut output = ExperimentOutput::default();
    for o in outcomes {
        match o {
            Ok(r) => output.results.push(r),
            Err(f) => output.failures.push(f),
        }
    }
    output.results.sort_by(|a, b| {
        (&a.row.sampler, a.row.nfe, a.row.seed).cmp(&(&b.row.sampler, b.row.nfe, b.row.seed))
    });
    Ok(output)
}

/// Least-squares slope of `log(error)` against `log(1/M)`.
pub fn convergence_order(series: &[(usize, f64)]) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::InvalidSeries(format!(
            "need at least 3 points, got {}",
            series.len()
        )));
    }
    if let Some(&(m, e)) = series
        .iter()
        .find(|(m, e)| *m == 0 || !(*e > 0.0) || !e.is_finite())
    {
        return Err(Error::InvalidSeries(format!(
            "errors must be positive and finite and M nonzero, got ({m}, {e})"
        )));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .map(|&(m, e)| (-(m as f64).ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidSeries("all M values are equal".into()));
    }
    Ok(sxy / sxx)
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes rows as CSV with a fixed header, sorted, LF line endings.
pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_results_to(rows, BufWriter::new(file)).map_err(|e| io_error(path, e))
}

pub fn write_results_to<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.sampler, a.nfe, a.seed).cmp(&(&b.sampler, b.nfe, b.seed)));
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer
        .write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Parse(e.to_string()))?;
    for row in sorted {
        writer
            .serialize(row)
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_error(path, e))?;
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Parse(format!(
            "unexpected CSV header in {}",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Parse(e.to_string())))
        .collect()
}

/// JSON mirror of the CSV, one object per row.
pub fn write_results_json(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| (&a.sampler, a.nfe, a.seed).cmp(&(&b.sampler, b.nfe, b.seed)));
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &sorted).map_err(|e| io_error(path, e))?;
    w.write_all(b"\n").map_err(|e| io_error(path, e))?;
    Ok(())
}
