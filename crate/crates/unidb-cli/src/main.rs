#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use unidb::checks::{compare_limits, run_checks, select, CheckContext, Ladder};
use unidb::harness::{run_experiment, write_results, write_results_json, ExperimentOutput};
use unidb::models::PredictionModel;
use unidb::parallel::Execution;
use unidb::samplers::{run_sampler, LimitMode, NoiseStreams, Process, SamplerSpec, TimeGrid};
use unidb::schedule::{Gamma, Schedule};
use unidb::StateVec;

use config::{Config, ConfigError};

#[derive(Parser, Debug)]
#[command(
    name = "unidb",
    version,
    about = "Unified diffusion-bridge samplers: validation, sampling, sweeps and limit comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant suite; exit 1 if any check fails.
    Validate(ValidateArgs),
    /// One sampling run, printing the terminal state.
    Sample(SampleArgs),
    /// Sweep samplers × NFE × seeds and write a CSV.
    Sweep(SweepArgs),
    /// Coefficient gaps between the exact solver and a limit family.
    Compare(CompareArgs),
    /// Print the effective configuration as TOML.
    DumpConfig(CommonArgs),
}

/// Config file and the overrides every subcommand accepts.
#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Penalty γ, a positive number or "inf".
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Steady variance level λ².
    #[arg(long, allow_hyphen_values = true)]
    lambda2: Option<f64>,
    /// Horizon T.
    #[arg(long = "horizon")]
    horizon: Option<f64>,
    /// Target terminal coefficient.
    #[arg(long)]
    terminal_decay: Option<f64>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Run only checks whose name contains this text.
    #[arg(long)]
    filter: Option<String>,
    /// Write a JSON summary here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sampler id; defaults to the first configured sampler.
    #[arg(long)]
    sampler: Option<String>,
    /// Number of steps M.
    #[arg(long)]
    steps: Option<usize>,
    /// Seed index within the master seed.
    #[arg(long, default_value_t = 0)]
    seed_index: u64,
    /// Print the full trajectory as JSON instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated step counts.
    #[arg(long, value_delimiter = ',')]
    nfe: Option<Vec<usize>>,
    /// Seeds per sampler and step count.
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated sampler ids.
    #[arg(long, value_delimiter = ',')]
    samplers: Option<Vec<String>>,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall time per run (makes files machine dependent).
    #[arg(long)]
    timing: bool,
    /// Also write a JSON mirror of the rows.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum CompareMode {
    Goub,
    DbimVe,
    DbimVp,
    UnidbVe,
    UnidbVp,
}

impl From<CompareMode> for LimitMode {
    fn from(m: CompareMode) -> Self {
        match m {
            CompareMode::Goub => LimitMode::Goub,
            CompareMode::DbimVe => LimitMode::DbimVe,
            CompareMode::DbimVp => LimitMode::DbimVp,
            CompareMode::UnidbVe => LimitMode::UnidbVe,
            CompareMode::UnidbVp => LimitMode::UnidbVp,
        }
    }
}

#[derive(Args, Debug)]
struct CompareArgs {
    mode: CompareMode,
    #[command(flatten)]
    common: CommonArgs,
    /// Write the table as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn load(common: &CommonArgs) -> Result<Config, ConfigError> {
    let mut cfg = Config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(g) = &common.gamma {
        cfg.schedule.gamma = g
            .parse::<Gamma>()
            .map_err(|e| ConfigError(anyhow::anyhow!("--gamma: {e}")))?;
    }
    if let Some(v) = common.lambda2 {
        cfg.schedule.lambda2 = v;
    }
    if let Some(v) = common.horizon {
        cfg.schedule.horizon = v;
    }
    if let Some(v) = common.terminal_decay {
        cfg.schedule.terminal_decay = v;
    }
    cfg.check()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Sample(a) => sample(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
        Command::DumpConfig(a) => dump_config(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn validate(args: ValidateArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(&args.common)?;
    let filter = args.filter.as_deref();
    if select(filter).is_empty() {
        return Err(ConfigError(anyhow::anyhow!(
            "--filter {:?} matches no check",
            filter.unwrap_or("")
        ))
        .into());
    }
    let ctx = CheckContext {
        params: cfg.schedule.params()?,
        seed: cfg.seed,
    };
    let reports = run_checks(&ctx, filter);
    let mut out = std::io::stdout().lock();
    for r in &reports {
        writeln!(
            out,
            "{} {:<22} {:>11.3e}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.metric,
            r.detail
        )?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    writeln!(
        out,
        "{} of {} checks passed",
        reports.len() - failed,
        reports.len()
    )?;
    if let Some(path) = &args.report {
        let summary = serde_json::json!({
            "passed": failed == 0,
            "total": reports.len(),
            "failed": failed,
            "checks": reports,
        });
        std::fs::write(path, serde_json::to_string_pretty(&summary)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn sample(args: SampleArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(&args.common)?;
    let spec: SamplerSpec = match &args.sampler {
        Some(id) => id
            .parse()
            .map_err(|e| ConfigError(anyhow::anyhow!("--sampler: {e}")))?,
        None => cfg.sampler.specs()?.remove(0),
    };
    let steps = args.steps.unwrap_or(cfg.grid.steps);
    if steps == 0 {
        return Err(ConfigError(anyhow::anyhow!("--steps must be at least 1")).into());
    }
    let schedule = Schedule::new(cfg.schedule.params()?)?;
    let oracle = cfg.oracle.spec()?;
    let model = PredictionModel::oracle(oracle, &schedule)?;
    let grid = TimeGrid::uniform(schedule.horizon(), steps)?;
    let xt = StateVec::filled(cfg.problem.dim, cfg.problem.x_terminal);
    let mut noise = NoiseStreams::new(cfg.seed, args.seed_index);
    let noise = (spec.process == Process::Sde).then_some(&mut noise);
    let out = run_sampler(&spec, &schedule, &model, &xt, &grid, noise)?;
    let rmse = match oracle.posterior_mean_target() {
        Some(m) => Some(
            out.terminal
                .rms_distance(&StateVec::filled(cfg.problem.dim, m))?,
        ),
        None => None,
    };
    let mut stdout = std::io::stdout().lock();
    if args.json {
        let doc = serde_json::json!({
            "sampler": spec.to_string(),
            "steps": steps,
            "evals": out.evals,
            "rmse": rmse,
            "terminal": out.terminal.as_slice(),
            "times": out.trajectory.times,
            "states": out.trajectory.states.iter().map(|s| s.as_slice()).collect::<Vec<_>>(),
            "step_evals": out.steps,
        });
        writeln!(stdout, "{}", serde_json::to_string_pretty(&doc)?)?;
    } else {
        writeln!(stdout, "sampler   {spec}")?;
        writeln!(stdout, "steps     {steps}")?;
        writeln!(stdout, "evals     {}", out.evals)?;
        let shown: Vec<String> = out
            .terminal
            .as_slice()
            .iter()
            .take(8)
            .map(|v| format!("{v:.10}"))
            .collect();
        let more = if out.terminal.dim() > 8 { ", …" } else { "" };
        writeln!(stdout, "terminal  [{}{more}]", shown.join(", "))?;
        if let Some(r) = rmse {
            writeln!(stdout, "rmse      {r:.10}")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = load(&args.common)?;
    if let Some(nfe) = args.nfe {
        cfg.sweep.nfe = nfe;
    }
    if let Some(seeds) = args.seeds {
        cfg.sweep.seeds = seeds;
    }
    if let Some(ids) = args.samplers {
        cfg.sampler.ids = ids;
    }
    if let Some(out) = args.out {
        cfg.output = out;
    }
    cfg.check()?;
    let mut spec = cfg.experiment()?;
    spec.record_timing = args.timing;
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let output = run_experiment(&spec, exec)?;
    let rows = output.rows();
    write_results(&rows, &cfg.output)
        .with_context(|| format!("writing {}", cfg.output.display()))?;
    if let Some(path) = &args.json {
        write_results_json(&rows, path).with_context(|| format!("writing {}", path.display()))?;
    }
    print_summary(&spec.samplers, &spec.nfe, &output)?;
    for f in &output.failures {
        eprintln!(
            "run failed: {} nfe={} seed={}: {}",
            f.sampler, f.nfe, f.seed, f.error
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(
    samplers: &[SamplerSpec],
    nfe: &[usize],
    output: &ExperimentOutput,
) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    let width = samplers
        .iter()
        .map(|s| s.to_string().len())
        .max()
        .unwrap_or(7)
        .max(7);
    write!(out, "{:<width$}", "sampler")?;
    for m in nfe {
        write!(out, " {:>10}", format!("M={m}"))?;
    }
    writeln!(out)?;
    for s in samplers {
        let id = s.to_string();
        write!(out, "{id:<width$}")?;
        for &m in nfe {
            match output.mean_rmse(&id, m) {
                Some(v) => write!(out, " {v:>10.4e}")?,
                None => write!(out, " {:>10}", "-")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

fn compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(&args.common)?;
    let table = compare_limits(args.mode.into(), &cfg.schedule.params()?)?;
    let mut out = std::io::stdout().lock();
    let ladder = match table.ladder {
        Ladder::Gamma => "gamma",
        Ladder::Theta => "theta0",
    };
    let kind = if table.relative {
        "relative"
    } else {
        "absolute"
    };
    writeln!(
        out,
        "mode {} ({kind} gaps over a 100x100 (s, t) grid)",
        table.mode
    )?;
    writeln!(
        out,
        "{ladder:>8} {:>11} {:>11} {:>11} {:>11} {:>11}",
        "on_prev", "on_xT", "on_x0hat", "noise_std", "max"
    )?;
    for r in &table.rows {
        let xt = r.on_xt.map_or("-".to_string(), |v| format!("{v:.3e}"));
        writeln!(
            out,
            "{:>8.0e} {:>11.3e} {:>11} {:>11.3e} {:>11.3e} {:>11.3e}",
            r.value, r.on_prev, xt, r.on_x0hat, r.noise_std, r.max
        )?;
    }
    let verdict = if table.passed { "holds" } else { "violated" };
    writeln!(
        out,
        "monotone decrease to within {:.0e}: {verdict}",
        table.tolerance
    )?;
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&table)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(if table.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn dump_config(args: CommonArgs) -> anyhow::Result<ExitCode> {
    let cfg = load(&args)?;
    print!("{}", cfg.to_toml());
    Ok(ExitCode::SUCCESS)
}
