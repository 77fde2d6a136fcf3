use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
schemes = ["M2approx", "M4exact"]
target_error = 1e-5

[chain]
n_spins = 3

[ansatz]
n_basis = 4

[seeds]
count = 2
optimization_steps = 40

[optimizer]
max_iterations = 30

[scan]
pulse_set = "initial"
timing_repeats = 1

[init_report]
step_counts = [20, 40]
"#;

fn bench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magnus-bench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[chain]\nn_spins = 3\nbogus = true\n").unwrap();
    let out = bench(&["seed-stage", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid configuration"));

    fs::write(dir.path().join("short.toml"), "[scan.fourth_order]\nmin_steps = 10\nmax_steps = 50\npoints = 6\n").unwrap();
    let out = bench(&["dt-scan", "--config", "short.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = bench(&["race", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn race_without_archive_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    let out = bench(&["race", "--config", "small.toml", "--out", "runs"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("archive.json"));
}

#[test]
fn stages_write_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    for stage in ["seed-stage", "dt-scan", "race", "init-report"] {
        let out = bench(&[stage, "--config", "small.toml", "--out", "runs", "--rng-seed", "7"], dir.path());
        assert!(
            out.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let runs: Vec<_> = fs::read_dir(dir.path().join("runs")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let run = runs[0].as_ref().unwrap().path();
    for name in [
        "config.json",
        "archive.json",
        "scan.csv",
        "scan_summary.json",
        "trajectories.csv",
        "envelope.csv",
        "race_summary.json",
        "init.csv",
    ] {
        assert!(run.join(name).is_file(), "{name} missing");
    }
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seeds"]["rng_seed"], 7);

    // a changed configuration gets its own run directory
    let out = bench(&["init-report", "--config", "small.toml", "--out", "runs", "--include-init"], dir.path());
    assert!(out.status.success());
    assert_eq!(fs::read_dir(dir.path().join("runs")).unwrap().count(), 2);
}
