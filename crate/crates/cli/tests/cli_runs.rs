use std::fs;
use std::path::Path;
use std::process::Command;

use timebin_lab::{run_preset, Preset, RunConfig, RunRequest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_timebin-lab"))
}

fn values(path: &Path) -> Vec<(String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn value(path: &Path, key: &str) -> f64 {
    values(path)
        .into_iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("{key} missing from {}", path.display()))
        .1
        .parse()
        .unwrap()
}

#[test]
fn analytic_tables_need_no_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["analytic-tables", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let joint = fs::read_to_string(dir.path().join("joint_distribution.csv")).unwrap();
    let rows: Vec<&str> = joint.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "alice_bin,alice_port,bob_bin,bob_port,probability");
    assert_eq!(rows.len(), 37);
    let total: f64 = rows[1..]
        .iter()
        .map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(dir.path().join("visibility_curve.csv").exists());
    assert!(dir.path().join("manifest.txt").exists());
}

#[test]
fn every_output_echoes_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = RunRequest::new(Preset::TacHistogram, dir.path());
    req.overrides = vec!["n_pulses=20000".into(), "tac.bin_width_ps=10".into()];
    req.seed = Some(42);
    let manifest = run_preset(&req).unwrap();
    assert_eq!(manifest.seed, 42);
    for name in &manifest.files {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let echo = text
            .lines()
            .find_map(|l| {
                l.strip_prefix("# config: ")
                    .or_else(|| l.strip_prefix("config = "))
            })
            .unwrap_or_else(|| panic!("{name} has no config echo"));
        if name.starts_with("events") {
            let back: timebin_core::engine::ExperimentConfig = serde_json::from_str(echo).unwrap();
            assert_eq!(back, manifest.config.experiment);
        } else {
            let back: RunConfig = serde_json::from_str(echo).unwrap();
            assert_eq!(back, manifest.config, "{name}");
        }
    }
    assert_eq!(manifest.files.last().unwrap(), "manifest.txt");
}

#[test]
fn usage_errors_exit_with_two() {
    let out = bin().arg("not-a-preset").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["sidepeak", "--set", "mu"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!("not-a-preset".parse::<Preset>().is_err());
}

#[test]
fn zero_pulses_fail_with_named_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["bell-scan", "--set", "n_pulses=0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("experiment.n_pulses = 0"), "{err}");
}

#[test]
fn validate_reports_each_violation() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, "{}").unwrap();
    assert!(timebin_lab::validate_config(&good).unwrap().is_empty());

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"experiment": {"mu": 0.9}, "bin_separation_ps": 7000}"#,
    )
    .unwrap();
    let d = timebin_lab::validate_config(&bad).unwrap();
    let fields: Vec<&str> = d.iter().map(|d| d.field.as_str()).collect();
    assert_eq!(
        fields,
        vec!["experiment.bin_separation_ps", "experiment.mu"]
    );
    assert!(d[0].rule.contains("alias"));

    let out = bin()
        .args(["validate", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(timebin_lab::validate_config(&dir.path().join("missing.json")).is_err());
}

#[test]
fn fit_failure_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "bell-scan",
            "--set",
            "n_pulses=20000",
            "--set",
            "alice.efficiency=0",
            "--set",
            "alice.dark_rate=0",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(dir.path().join("fringe.csv").exists());
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = failed"), "{manifest}");
    assert!(manifest.contains("fringe.csv"));
}

#[test]
fn sidepeak_recovers_pairs_per_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = RunRequest::new(Preset::Sidepeak, dir.path());
    req.overrides = vec!["mu=0.05".into(), "n_pulses=50000000".into()];
    run_preset(&req).unwrap();
    let ppair = dir.path().join("ppair.txt");
    let est = value(&ppair, "ppair_corrected");
    let rel = value(&ppair, "ppair_corrected_relative_uncertainty");
    assert!(
        (est - 0.05).abs() < 3.0 * rel * est,
        "{est} +- {}",
        rel * est
    );
    assert!(dir.path().join("tac.csv").exists());
}

#[test]
fn config_file_and_overrides_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"experiment": {"mu": 0.07, "n_pulses": 10}, "scan": {"points": 9}}"#,
    )
    .unwrap();
    let c =
        timebin_lab::resolve_config(Some(Preset::BellScan), Some(&cfg), &["n_pulses=11".into()])
            .unwrap();
    assert_eq!(c.experiment.mu, 0.07);
    assert_eq!(c.experiment.n_pulses, 11);
    assert_eq!(c.scan.points, 9);
    let d = timebin_lab::resolve_config(Some(Preset::BellScan), None, &[]).unwrap();
    assert_eq!(d.experiment.n_pulses, 5_000_000);
}
