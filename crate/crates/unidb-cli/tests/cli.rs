use std::path::Path;
use std::process::{Command, Output};

fn unidb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unidb"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = unidb(&["--version"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("unidb "));
}

#[test]
fn validate_with_defaults_passes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = unidb(
        &["validate", "--report", report.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        14,
        "{text}"
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["total"], 14);
}

#[test]
fn validate_filter_runs_one_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = unidb(&["validate", "--filter", "semigroup"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("semigroup"));
    assert!(text.contains("1 of 1 checks passed"), "{text}");
}

#[test]
fn nonpositive_gamma_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[schedule]\ngamma = -3.0\n").unwrap();
    let o = unidb(&["validate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));

    let o = unidb(&["validate", "--gamma", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[schedule]\nlamda2 = 1.0\n").unwrap();
    let o = unidb(
        &["dump-config", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda2"), "{}", stderr(&o));
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = unidb(
        &["dump-config", "--gamma", "inf", "--seed", "7"],
        dir.path(),
    );
    assert!(o.status.success());
    let cfg = dir.path().join("dumped.toml");
    std::fs::write(&cfg, stdout(&o)).unwrap();
    let again = unidb(
        &["dump-config", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert!(again.status.success());
    assert_eq!(stdout(&o), stdout(&again));
    assert!(stdout(&o).contains("gamma = \"inf\""));
}

#[test]
fn sweep_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let o = unidb(
        &[
            "sweep",
            "--nfe",
            "5",
            "--seeds",
            "1",
            "--samplers",
            "euler-sde-data-o1,unidbpp-sde-data-o1,unidbpp-ode-data-o2s",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "{csv}");
    assert!(lines[0].starts_with("sampler,"));
    assert!(stdout(&o).contains("unidbpp-ode-data-o2s"));
}

#[test]
fn sweep_is_byte_identical_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = unidb(
            &[
                "sweep",
                "--nfe",
                "5,10",
                "--seeds",
                "4",
                "--seed",
                "11",
                "--out",
                path.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(o.status.success());
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn sweep_sequential_matches_parallel() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let path = dir.path().join(name);
        let mut args = vec![
            "sweep",
            "--nfe",
            "5",
            "--seeds",
            "3",
            "--out",
            path.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        assert!(unidb(&args, dir.path()).status.success());
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("p.csv", &[]), run("s.csv", &["--sequential"]));
}

#[test]
fn sample_prints_terminal_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = unidb(
        &[
            "sample",
            "--sampler",
            "unidbpp-ode-data-o1",
            "--steps",
            "4",
            "--json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["steps"], 4);
    assert_eq!(json["times"].as_array().unwrap().len(), 5);

    let o = unidb(&["sample", "--sampler", "not-a-sampler"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_modes() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["goub", "dbim_ve", "dbim_vp", "unidb_ve"] {
        let o = unidb(&["compare", mode], dir.path());
        assert_eq!(o.status.code(), Some(0), "{mode}: {}", stdout(&o));
        assert!(stdout(&o).contains("holds"));
    }
    let o = unidb(&["compare", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_example_config_matches_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let from_file = unidb(
        &["dump-config", "--config", example.to_str().unwrap()],
        dir.path(),
    );
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    let defaults = unidb(&["dump-config"], dir.path());
    assert_eq!(stdout(&from_file), stdout(&defaults));
}
