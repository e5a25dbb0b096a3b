use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vaxmpc"))
}

fn preset_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, format!(r#"{{"preset": "wallonia-2020"{extra}}}"#)).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_deterministic_and_compare_reads_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = preset_config(tmp.path(), "");
    for (policy, dir) in [("national", "nat"), ("mpc", "a"), ("mpc", "b")] {
        let out = run(bin()
            .args(["--quiet", "--seed", "3", "simulate", "--config"])
            .arg(&cfg)
            .args(["--policy", policy, "--out"])
            .arg(tmp.path().join(dir)));
        assert!(out.status.success());
    }
    let a = read_dir_sorted(&tmp.path().join("a"));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["config.json", "metrics.json", "mpc.jsonl", "result.json", "trajectory.csv"]);
    assert_eq!(a, read_dir_sorted(&tmp.path().join("b")));

    let report = tmp.path().join("report.json");
    let out = run(bin()
        .args(["compare", "--runs"])
        .arg(tmp.path().join("nat"))
        .arg(tmp.path().join("a"))
        .arg("--out")
        .arg(&report));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("mpc vs national"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["baseline"], "national");
    assert!(json["improvements"][0]["deaths_since_vax"].as_f64().unwrap() > 0.0);
}

#[test]
fn certify_passes_on_the_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = preset_config(tmp.path(), "");
    let report = tmp.path().join("cert.json");
    let out = run(bin()
        .args(["--seed", "5", "certify", "--samples", "500", "--rollouts", "5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&report));
    assert_eq!(out.status.code(), Some(0));
    let first = std::fs::read(&report).unwrap();
    run(bin()
        .args(["--quiet", "--seed", "5", "certify", "--samples", "500", "--rollouts", "5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&report));
    assert_eq!(first, std::fs::read(&report).unwrap());
}

#[test]
fn sweep_writes_one_run_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = preset_config(tmp.path(), "");
    let out_dir = tmp.path().join("sweep");
    let out = run(bin()
        .args(["--quiet", "sweep", "--policy", "national", "--vary", "mpc.v_bar=30000,55191", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert!(out.status.success());
    assert!(out_dir.join("mpc.v_bar=30000").join("metrics.json").exists());
    assert!(out_dir.join("mpc.v_bar=55191").join("metrics.json").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("sweep.json")).unwrap()).unwrap();
    let used: Vec<f64> = (0..2).map(|i| summary[i]["metrics"]["vaccines_used"].as_f64().unwrap()).collect();
    assert!(used[0] < used[1]);
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = preset_config(tmp.path(), r#", "mpc": {"epsilon": 0.9}"#);
    let out =
        bin().args(["simulate", "--config"]).arg(&bad).args(["--out"]).arg(tmp.path().join("x")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));

    let cfg = preset_config(tmp.path(), "");
    let out = bin()
        .args(["simulate", "--policy", "greedy", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(tmp.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solver_failures_exit_with_two() {
    // Counts near the top of the f64 range overflow the terminal cost.
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("overflow.json");
    std::fs::write(
        &path,
        r#"{
            "model": {"lambda": [0.1], "gamma_r": [0.4], "gamma_d": [0.5], "population": [1.5e308],
                      "contact_matrix": [[0.0]]},
            "i0": [1.5e308],
            "policy": "mpc",
            "mpc": {"horizon": 1, "epsilon": 0.01, "v_bar": 10, "vaccination_start_day": 0, "strategy_horizon": 3}
        }"#,
    )
    .unwrap();
    let out =
        bin().args(["simulate", "--config"]).arg(&path).args(["--out"]).arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("day 0"));
}
