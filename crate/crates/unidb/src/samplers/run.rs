use serde::{Deserialize, Serialize};

use super::coeffs::{limit_coeffs, LimitMode};
use super::corrector::unidbpp_corrected_step;
use super::euler::euler_step;
use super::exact::{
    apply_first_order, predict_at, unidbpp_step_1, unidbpp_step_2_multistep,
    unidbpp_step_2_singlestep, History,
};
use super::noise::{
    noise_param_step_1, noise_param_step_2_multistep, noise_param_step_2_singlestep,
};
use super::spec::{Family, Order, Process, SamplerSpec, Stepping, TimeGrid};
use crate::bridge::Trajectory;
use crate::error::Result;
use crate::models::{Parameterization, PredictionModel};
use crate::rng::RngStream;
use crate::schedule::{Gamma, Schedule};
use crate::state::StateVec;

/// The two Gaussian streams of one SDE run.
///
/// Every sampler draws its main per-step noise from `primary`, so runs with
/// the same seed index share increments across samplers. Extra draws (the
/// singlestep intermediate state, the corrector update) use `auxiliary`.
#[derive(Debug, Clone)]
pub struct NoiseStreams {
    pub primary: RngStream,
    pub auxiliary: RngStream,
}

impl NoiseStreams {
    pub fn new(master_seed: u64, seed_index: u64) -> Self {
        Self {
            primary: RngStream::new(master_seed, &format!("run/seed={seed_index}/primary")),
            auxiliary: RngStream::new(master_seed, &format!("run/seed={seed_index}/auxiliary")),
        }
    }
}

/// Model evaluations spent on one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub s: f64,
    pub t: f64,
    pub evals: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub terminal: StateVec,
    /// States at every grid node; corrected states when a corrector is on.
    pub trajectory: Trajectory,
    pub steps: Vec<StepRecord>,
    pub evals: u64,
}

/// Runs `spec` over `grid` starting from `x_T`.
///
/// The SDE process draws from `noise` (no draws at the final step, and none
/// at all when `noise` is `None`); the Mean-ODE process ignores it.
/// Evaluation counts are read off `model`, so it should not be shared with
/// concurrent runs.
pub fn run_sampler(
    spec: &SamplerSpec,
    schedule: &Schedule,
    model: &PredictionModel,
    x_terminal: &StateVec,
    grid: &TimeGrid,
    mut noise: Option<&mut NoiseStreams>,
) -> Result<RunOutput> {
    spec.validate()?;
    grid.check_against(schedule)?;
    let goub;
    let schedule = if spec.limit == LimitMode::Goub {
        goub = schedule.with_gamma(Gamma::Infinite)?;
        &goub
    } else {
        schedule
    };

    let times = grid.times();
    let start_evals = model.eval_count();
    let mut states = Vec::with_capacity(times.len());
    let mut steps = Vec::with_capacity(grid.steps());
    let mut history = History::new();
    let mut x = x_terminal.clone();
    states.push(x.clone());

    for i in 0..grid.steps() {
        let (s, t) = (times[i], times[i + 1]);
        let last = i + 1 == grid.steps();
        let before = model.eval_count();
        let step_noise = match spec.process {
            Process::Sde if !last => noise.as_deref_mut(),
            _ => None,
        };
        x = match (spec.family, spec.parameterization, spec.order) {
            (Family::Euler, param, _) => {
                let z = step_noise.map(|n| n.primary.normal_vec(x.dim()));
                euler_step(schedule, model, param, &x, x_terminal, s, t, z.as_ref())?
            }
            (Family::Unidbpp, Parameterization::Data, Order::First) => {
                if let Some(corrector) = &spec.corrector {
                    unidbpp_corrected_step(
                        schedule, model, &x, x_terminal, s, t, corrector, step_noise,
                    )?
                    .1
                } else if spec.limit.is_comparison_provider() {
                    let c = limit_coeffs(spec.limit, schedule, s, t)?;
                    let x0hat = predict_at(schedule, model, &x, x_terminal, s)?;
                    let z = step_noise.map(|n| n.primary.normal_vec(x.dim()));
                    apply_first_order(&c, &x, x_terminal, &x0hat, z.as_ref())?
                } else {
                    unidbpp_step_1(schedule, model, &x, x_terminal, s, t, step_noise)?
                }
            }
            (
                Family::Unidbpp,
                Parameterization::Data,
                Order::Second(Stepping::Singlestep { r }),
            ) => unidbpp_step_2_singlestep(schedule, model, &x, x_terminal, s, t, r, step_noise)?,
            (Family::Unidbpp, Parameterization::Data, Order::Second(Stepping::Multistep)) => {
                unidbpp_step_2_multistep(
                    schedule,
                    model,
                    &x,
                    x_terminal,
                    s,
                    t,
                    &mut history,
                    step_noise,
                )?
            }
            (Family::Unidbpp, Parameterization::Noise, Order::First) => {
                noise_param_step_1(schedule, model, &x, x_terminal, s, t, step_noise)?
            }
            (
                Family::Unidbpp,
                Parameterization::Noise,
                Order::Second(Stepping::Singlestep { r }),
            ) => {
                noise_param_step_2_singlestep(schedule, model, &x, x_terminal, s, t, r, step_noise)?
            }
            (Family::Unidbpp, Parameterization::Noise, Order::Second(Stepping::Multistep)) => {
                noise_param_step_2_multistep(
                    schedule,
                    model,
                    &x,
                    x_terminal,
                    s,
                    t,
                    &mut history,
                    step_noise,
                )?
            }
        };
        steps.push(StepRecord {
            s,
            t,
            evals: model.eval_count() - before,
        });
        states.push(x.clone());
    }

    Ok(RunOutput {
        terminal: x,
        trajectory: Trajectory {
            times: times.to_vec(),
            states,
        },
        steps,
        evals: model.eval_count() - start_evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::OracleSpec;
    use crate::schedule::ScheduleParams;

    #[test]
    fn evaluation_accounting_matches_spec() {
        let schedule = Schedule::new(ScheduleParams::default()).unwrap();
        let grid = TimeGrid::uniform(schedule.horizon(), 6).unwrap();
        let xt = StateVec::from(1.0);
        for id in [
            "euler-sde-data-o1",
            "unidbpp-sde-data-o1",
            "unidbpp-sde-data-o2s",
            "unidbpp-sde-data-o2m",
            "unidbpp-sde-data-o1-corr",
            "unidbpp-sde-data-o1-corr2",
            "unidbpp-sde-noise-o2s",
        ] {
            let spec: SamplerSpec = id.parse().unwrap();
            let model = PredictionModel::oracle(
                OracleSpec::GaussianPrior {
                    mean: 0.0,
                    var: 1.0,
                },
                &schedule,
            )
            .unwrap();
            let mut noise = NoiseStreams::new(7, 0);
            let out = run_sampler(&spec, &schedule, &model, &xt, &grid, Some(&mut noise)).unwrap();
            assert_eq!(out.evals, (spec.evals_per_step() * 6) as u64, "{id}");
            assert!(out.terminal.is_finite(), "{id}");
            assert_eq!(out.trajectory.states.len(), 7);
        }
    }

    #[test]
    fn same_streams_give_identical_runs() {
        let schedule = Schedule::new(ScheduleParams::default()).unwrap();
        let grid = TimeGrid::uniform(schedule.horizon(), 5).unwrap();
        let spec: SamplerSpec = "unidbpp-sde-data-o1-corr".parse().unwrap();
        let model = PredictionModel::oracle(
            OracleSpec::GaussianPrior {
                mean: 0.0,
                var: 1.0,
            },
            &schedule,
        )
        .unwrap();
        let xt = StateVec::from(0.8);
        let a = run_sampler(
            &spec,
            &schedule,
            &model,
            &xt,
            &grid,
            Some(&mut NoiseStreams::new(3, 1)),
        )
        .unwrap();
        let b = run_sampler(
            &spec,
            &schedule,
            &model,
            &xt,
            &grid,
            Some(&mut NoiseStreams::new(3, 1)),
        )
        .unwrap();
        assert_eq!(a.terminal, b.terminal);
    }
}
