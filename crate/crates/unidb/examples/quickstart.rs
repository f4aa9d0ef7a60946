//! Five UniDB++ SDE steps on the Gaussian toy.

use unidb::models::{OracleSpec, PredictionModel};
use unidb::samplers::{run_sampler, NoiseStreams, TimeGrid};
use unidb::{Schedule, ScheduleParams, StateVec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sched = Schedule::new(ScheduleParams::default())?;
    let model = PredictionModel::oracle(
        OracleSpec::GaussianPrior {
            mean: 0.0,
            var: 1.0,
        },
        &sched,
    )?;
    let grid = TimeGrid::uniform(sched.horizon(), 5)?;
    let mut noise = NoiseStreams::new(42, 0);
    let out = run_sampler(
        &"unidbpp-sde-data-o1".parse()?,
        &sched,
        &model,
        &StateVec::from(1.0),
        &grid,
        Some(&mut noise),
    )?;
    println!(
        "terminal {:.6} after {} evaluations",
        out.terminal[0], out.evals
    );
    Ok(())
}
