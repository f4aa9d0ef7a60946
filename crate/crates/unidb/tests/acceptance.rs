//! Acceptance criteria: one PASS/FAIL line each, plus a runtime bound.
//!
//! The table goes to stderr on every run. Criteria listed in `KNOWN_FAILURES` are reported but not asserted;
//! the README explains why each one fails.

use std::io::Write;
use std::time::{Duration, Instant};

use unidb::checks::{suite, CheckContext};
use unidb::harness::{run_experiment, write_results_to, ExperimentOutput, ExperimentSpec};
use unidb::parallel::Execution;
use unidb::samplers::SamplerSpec;

/// Criteria that do not hold for this implementation. Each is still run and
/// printed; the suite only asserts its runtime bound.
const KNOWN_FAILURES: &[u32] = &[13];

struct Verdict {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

fn check(id: u32, name: &'static str, check_name: &str, limit_s: u64) -> Verdict {
    let ctx = CheckContext::default();
    let c = suite()
        .into_iter()
        .find(|c| c.name == check_name)
        .unwrap_or_else(|| panic!("no check named {check_name}"));
    let start = Instant::now();
    let r = c.run(&ctx);
    Verdict {
        id,
        name,
        passed: r.passed,
        detail: format!(
            "{} = {:.3e} (bound {:.0e}), {}",
            r.name, r.metric, r.threshold, r.detail
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(limit_s),
    }
}

/// Several checks that together make one criterion.
fn checks(id: u32, name: &'static str, names: &[&str], limit_s: u64) -> Verdict {
    let parts: Vec<Verdict> = names.iter().map(|n| check(id, name, n, limit_s)).collect();
    Verdict {
        id,
        name,
        passed: parts.iter().all(|p| p.passed),
        detail: parts
            .iter()
            .map(|p| p.detail.as_str())
            .collect::<Vec<_>>()
            .join("; "),
        elapsed: parts.iter().map(|p| p.elapsed).sum(),
        limit: Duration::from_secs(limit_s),
    }
}

fn ids(list: &[&str]) -> Vec<SamplerSpec> {
    list.iter().map(|s| s.parse().unwrap()).collect()
}

fn toy(samplers: &[&str], nfe: Vec<usize>, seeds: usize) -> ExperimentOutput {
    let spec = ExperimentSpec {
        samplers: ids(samplers),
        nfe,
        seeds,
        master_seed: 2024,
        ..ExperimentSpec::default()
    };
    let out = run_experiment(&spec, Execution::Parallel).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    out
}

fn nfe_efficiency() -> Verdict {
    let start = Instant::now();
    let fast = toy(&["unidbpp-sde-data-o1"], vec![5], 256);
    let slow = toy(&["euler-sde-data-o1"], vec![50], 256);
    let ours = fast.mean_rmse("unidbpp-sde-data-o1", 5).unwrap();
    let euler = slow.mean_rmse("euler-sde-data-o1", 50).unwrap();
    Verdict {
        id: 12,
        name: "NFE efficiency",
        passed: ours <= euler,
        detail: format!(
            "UniDB++ SDE at NFE 5: {ours:.4}; Euler SDE at NFE 50: {euler:.4}; 256 paired seeds"
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(60),
    }
}

fn corrector_benefit() -> Verdict {
    let start = Instant::now();
    let (plain, corrected) = ("unidbpp-sde-data-o1", "unidbpp-sde-data-o1-corr");
    let out = toy(&[plain, corrected], vec![5, 6, 7, 8], 256);
    let mut wins = 0;
    let mut cells = Vec::new();
    for m in 5..=8 {
        let p = out.mean_rmse(plain, m).unwrap();
        let c = out.mean_rmse(corrected, m).unwrap();
        if c <= p {
            wins += 1;
        }
        cells.push(format!("M={m} {c:.3} vs {p:.3}"));
    }
    Verdict {
        id: 13,
        name: "corrector benefit",
        passed: wins >= 3,
        detail: format!(
            "corrected vs plain mean RMSE, {wins}/4 wins: {}",
            cells.join(", ")
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(60),
    }
}

fn determinism() -> Verdict {
    let start = Instant::now();
    let spec = ExperimentSpec {
        samplers: ids(&[
            "euler-sde-data-o1",
            "unidbpp-sde-data-o1",
            "unidbpp-sde-data-o2m",
            "unidbpp-ode-data-o2s",
        ]),
        nfe: vec![5, 10, 20],
        seeds: 8,
        master_seed: 99,
        ..ExperimentSpec::default()
    };
    let csv = |exec| {
        let out = run_experiment(&spec, exec).unwrap();
        let mut bytes = Vec::new();
        write_results_to(&out.rows(), &mut bytes).unwrap();
        bytes
    };
    let a = csv(Execution::Parallel);
    let b = csv(Execution::Parallel);
    let c = csv(Execution::Sequential);
    Verdict {
        id: 14,
        name: "determinism",
        passed: a == b && a == c && !a.is_empty(),
        detail: format!(
            "{} CSV bytes, two parallel runs and one sequential run compared",
            a.len()
        ),
        elapsed: start.elapsed(),
        limit: Duration::from_secs(10),
    }
}

#[test]
fn acceptance_criteria() {
    let verdicts = vec![
        check(1, "partition of unity", "partition_of_unity", 5),
        check(2, "noise-variance semigroup", "semigroup", 5),
        check(3, "constant-model exactness", "constant_exactness", 1),
        check(4, "affine-in-beta exactness", "affine_exactness", 1),
        check(5, "Euler convergence", "euler_convergence", 30),
        check(6, "GOUB limit", "goub_limit", 10),
        check(7, "DBIM-VE recovery", "dbim_ve_limit", 10),
        check(8, "DBIM-VP identities", "dbim_vp_identities", 5),
        checks(
            9,
            "roundtrips and Euler equivalence",
            &[
                "beta_roundtrip",
                "conversion_roundtrip",
                "euler_equivalence",
            ],
            5,
        ),
        check(10, "forward consistency", "forward_consistency", 60),
        check(11, "delta_n Monte Carlo", "delta_n_monte_carlo", 30),
        nfe_efficiency(),
        corrector_benefit(),
        determinism(),
    ];

    // Written to the raw stderr handle so the table shows up without --nocapture.
    let mut err = std::io::stderr().lock();
    let mut problems = Vec::new();
    for v in &verdicts {
        let known = KNOWN_FAILURES.contains(&v.id);
        let tag = match (v.passed, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        writeln!(
            err,
            "[{:>2}] {tag:<12} {:<34} {:>8.3}s  {}",
            v.id,
            v.name,
            v.elapsed.as_secs_f64(),
            v.detail
        )
        .unwrap();
        if !v.passed && !known {
            problems.push(format!(
                "criterion {} ({}) failed: {}",
                v.id, v.name, v.detail
            ));
        }
        if v.passed && known {
            problems.push(format!(
                "criterion {} now passes; drop it from KNOWN_FAILURES",
                v.id
            ));
        }
        if v.elapsed > v.limit {
            problems.push(format!(
                "criterion {} took {:.2}s, limit {}s",
                v.id,
                v.elapsed.as_secs_f64(),
                v.limit.as_secs()
            ));
        }
    }
    assert!(problems.is_empty(), "{}", problems.join("\n"));
}
