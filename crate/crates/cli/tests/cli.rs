//! End-to-end runs of the `ousse` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stock(name: &str) -> Value {
    let text = fs::read_to_string(configs_dir().join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn ousse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ousse")).args(args).output().unwrap()
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn run_with(sub: &str, cfg: &Value, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), cfg);
    let out = dir.path().join("out");
    let mut args = vec![sub, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (ousse(&args), dir)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn report(dir: &tempfile::TempDir) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.path().join("out/verify.json")).unwrap()).unwrap()
}

fn entry<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap()
}

#[test]
fn dephasing_coherence_lands_on_the_closed_form() {
    let (out, dir) = run_with("simulate", &stock("dephasing.json"), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/series.csv"));
    let last = rows.last().unwrap();
    assert_eq!(last[column(&header, "t")], 1.0);
    let re = last[column(&header, "eta_re_0_1")];
    // stderr of the coherence is below 0.004 at n = 10⁴; allow 3σ + 5·dt
    assert!((re - 0.2106).abs() < 3.0 * 0.004 + 5e-3, "{re}");
    let sz = last[column(&header, "sz_mean")];
    let sz_se = last[column(&header, "sz_stderr")];
    assert!(sz.abs() <= 3.0 * sz_se + 5e-3);

    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["divergence_count"], 0);
    assert_eq!(summary["master_seed"], 1);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let mut cfg = stock("damping_sme.json");
    cfg["run"]["n_traj"] = json!(300);
    cfg["grid"]["T"] = json!(0.5);
    let (a, da) = run_with("simulate", &cfg, &["--threads", "1"]);
    let (b, db) = run_with("simulate", &cfg, &["--threads", "3"]);
    assert!(a.status.success() && b.status.success());
    let ca = fs::read(da.path().join("out/series.csv")).unwrap();
    let cb = fs::read(db.path().join("out/series.csv")).unwrap();
    assert_eq!(ca, cb);

    let (c, dc) = run_with("simulate", &cfg, &["--seed", "12345"]);
    assert!(c.status.success());
    assert_ne!(ca, fs::read(dc.path().join("out/series.csv")).unwrap());
}

#[test]
fn zero_model_has_constant_state_columns() {
    let mut cfg = stock("dephasing.json");
    cfg["model"]["K"] = json!([[[0, 0], [0, 0]], [[0, 0], [0, 0]]]);
    cfg["run"]["n_traj"] = json!(50);
    let (out, dir) = run_with("simulate", &cfg, &[]);
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("out/series.csv"));
    for (c, name) in header.iter().enumerate() {
        if name.starts_with("eta_") || name.starts_with("mean_weight") {
            assert!(rows.iter().all(|r| r[c] == rows[0][c]), "{name} varies");
        }
    }
}

#[test]
fn stock_battery_passes() {
    let mut cfg = stock("qubit_battery.json");
    cfg["run"]["n_traj"] = json!(2000);
    let (out, dir) = run_with("verify", &cfg, &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    let r = report(&dir);
    assert_eq!(r["pass"], true);
    for name in ["consistency", "martingale", "girsanov", "mean_equation", "covariance"] {
        assert_eq!(entry(&r, name)["pass"], true, "{name}");
    }
    assert_eq!(r["skipped"][0]["name"], "lindblad_oracle");
}

#[test]
fn perturbed_drift_fails_consistency() {
    let mut cfg = stock("qubit_battery.json");
    cfg["check"] = json!({"suites": ["consistency"], "perturb_drift": [1e-3, 0.0]});
    let (out, dir) = run_with("verify", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3));
    let r = report(&dir);
    assert_eq!(r["pass"], false);
    let c = entry(&r, "consistency");
    assert_eq!(c["pass"], false);
    let residual = c["details"]["max_residual"].as_f64().unwrap();
    assert!((residual - 2e-3).abs() < 1e-12, "{residual}");
}

#[test]
fn markovian_config_activates_the_oracle() {
    let mut cfg = stock("markovian_dephasing.json");
    cfg["run"]["n_traj"] = json!(2000);
    cfg["check"]["suites"] = json!(["lindblad_oracle"]);
    let (out, dir) = run_with("verify", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let r = report(&dir);
    let oracle = entry(&r, "lindblad_oracle");
    assert_eq!(oracle["pass"], true);
    assert_eq!(oracle["details"]["output_points"], 21);
    assert!(r["skipped"].as_array().unwrap().is_empty());
}

#[test]
fn validation_errors_exit_with_one() {
    let mut cfg = stock("dephasing.json");
    cfg["model"]["H"]["coefficients"][0][0][1] = json!([1.0, 0.0]);
    cfg["run"]["mode"] = json!("sideways");
    let (out, dir) = run_with("simulate", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model.H.coefficients[0]"), "{err}");
    assert!(err.contains("run.mode"), "{err}");
    assert!(!dir.path().join("out").exists());

    let mut cfg = stock("dephasing.json");
    cfg["model"]["gamma"] = json!(1500.0);
    let (out, _dir) = run_with("simulate", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability"));

    assert_eq!(ousse(&["simulate"]).status.code(), Some(1));
    assert_eq!(
        ousse(&["simulate", "--config", "/nonexistent.json"]).status.code(),
        Some(1)
    );
}

#[test]
fn divergent_runs_abort_with_two() {
    let mut cfg = stock("damping_sme.json");
    cfg["model"]["B"]["coefficients"] = json!([
        [[[0, 0], [0, 0]], [[0, 0], [0, 0]]],
        [[[0, 0], [0, 0]], [[0, 0], [0, 0]]],
        [[[0, 0], [1e160, 0]], [[1e160, 0], [0, 0]]]
    ]);
    cfg["model"]["gamma"] = json!(0.0);
    cfg["run"]["mode"] = json!("linear");
    cfg["run"]["n_traj"] = json!(20);
    cfg["grid"] = json!({"dt": 0.01, "T": 0.1});
    let (out, dir) = run_with("simulate", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "aborted");
    assert_eq!(summary["partial"], true);
}

#[test]
fn covariance_table() {
    let out = ousse(&[
        "covariance",
        "--gamma",
        "1",
        "--dt",
        "0.01",
        "--n-paths",
        "1000",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,s,analytic,empirical,stderr"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 25);
    let diag = rows.iter().find(|r| r[0] == 1.0 && r[1] == 1.0).unwrap();
    assert!((diag[2] - 0.432332).abs() < 1e-6);

    let dir = tempfile::tempdir().unwrap();
    let out = ousse(&[
        "covariance",
        "--gamma",
        "0",
        "--n-paths",
        "100000",
        "--seed",
        "4",
        "--times",
        "0.2,0.4,0.6,0.8,1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let (_, rows) = read_csv(&dir.path().join("covariance.csv"));
    let mut inside = 0;
    for r in &rows {
        assert_eq!(r[2], r[0].min(r[1]));
        if (r[3] - r[2]).abs() <= 3.0 * r[4] {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.95 * rows.len() as f64, "{inside}/{}", rows.len());

    assert_eq!(ousse(&["covariance", "--gamma", "-1"]).status.code(), Some(1));
}

#[test]
fn stock_configs_round_trip() {
    for name in [
        "dephasing.json",
        "markovian_dephasing.json",
        "qubit_battery.json",
        "damping_sme.json",
    ] {
        let text = fs::read_to_string(configs_dir().join(name)).unwrap();
        let first = ousse_cli::parse_config(&text).unwrap().canonical_json();
        let second = ousse_cli::parse_config(&first).unwrap().canonical_json();
        assert_eq!(first, second, "{name}");
    }
}
