use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cpe(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpe"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CPE_OUTPUT_DIR")
        .output()
        .expect("spawn cpe")
}

fn config(initial: &str, t_end: f64) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "grid": {{"nx": 8, "ny": 8, "nz": 5}},
  "params": {{"mu": 1.0, "mu_prime": 1.0, "model": "Gamma1"}},
  "mode": "GlobalGamma1",
  "dt": 0.05,
  "t_end": {t_end},
  "output_every": 2,
  "initial": {initial}
}}"#
    )
}

#[test]
fn steady_run_is_flat_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), config(r#"{"preset": "steady"}"#, 0.5)).unwrap();
    let out = cpe(&["simulate", "c.json", "--output-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/diagnostics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows.len() >= 2);
    // everything but step and t is identical from row to row
    let tail = |r: &str| r.split(',').skip(2).collect::<Vec<_>>().join(",");
    assert!(rows.iter().all(|r| tail(r) == tail(rows[0])));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"], "completed");
}

#[test]
fn small_data_run_reports_decay_fit() {
    let dir = tempfile::tempdir().unwrap();
    let init = r#"{"preset": "fourier_perturbation", "amplitude": 0.001, "mode": [1, 0]}"#;
    fs::write(dir.path().join("c.json"), config(init, 3.0)).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cpe"))
        .args(["simulate", "c.json"])
        .current_dir(dir.path())
        .env("CPE_OUTPUT_DIR", dir.path().join("env-out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("env-out/summary.json")).unwrap()).unwrap();
    let eta = summary["decay_fit"]["eta"].as_f64().unwrap();
    assert!(eta > 0.15 && eta < 0.5, "eta = {eta}");
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let init = r#"{"preset": "random_smooth", "amplitude": 0.05, "seed": 4}"#;
    fs::write(dir.path().join("c.json"), config(init, 0.5)).unwrap();
    for o in ["a", "b"] {
        assert_eq!(cpe(&["simulate", "c.json", "--output-dir", o], dir.path()).status.code(), Some(0));
    }
    let a = fs::read(dir.path().join("a/diagnostics.csv")).unwrap();
    let b = fs::read(dir.path().join("b/diagnostics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let txt = config(r#"{"preset": "steady"}"#, 0.5).replace("\"dt\": 0.05", "\"dt\": 0.05, \"lin_tol\": 1e-3");
    fs::write(dir.path().join("c.json"), txt).unwrap();
    let out = cpe(&["simulate", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lin_tol") && err.contains("line"), "{err}");

    let txt = config(r#"{"preset": "fourier_perturbation", "amplitude": 0.0, "mode": [1, 0]}"#, 0.5);
    fs::write(dir.path().join("c.json"), txt).unwrap();
    let out = cpe(&["simulate", "c.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial.amplitude"));
}

#[test]
fn map_breakdown_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let init = r#"{"preset": "fourier_perturbation", "amplitude": 0.45, "mode": [1, 0], "velocity_scale": 50.0}"#;
    let txt = config(init, 1.0).replace("\"dt\": 0.05", "\"dt\": 0.002");
    fs::write(dir.path().join("c.json"), txt).unwrap();
    let out = cpe(&["simulate", "c.json", "--output-dir", "o"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("o/summary.json")).unwrap();
    assert!(summary.contains("map_noninvertible"));
}

#[test]
fn spectrum_defaults_and_nonelliptic_viscosity() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpe(&["spectrum"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["ok"], true);
    assert!(r["eta0"].as_f64().unwrap() > 0.0);

    let out = cpe(&["spectrum", "--mu", "1", "--mu-prime", "-1.5"], dir.path());
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["ok"], false);
    assert!(r["min_symbol_eigenvalue"].as_f64().unwrap() < 0.0);
    assert!(r["message"].as_str().unwrap().contains("mu + mu'"));
}

#[test]
fn resolvent_problems() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("m.json"), r#"{"grid": {"nx": 8, "ny": 8, "nz": 9}, "lambda": [0, 10], "rhs": {"kind": "manufactured"}}"#).unwrap();
    let out = cpe(&["resolvent", "m.json", "--output-dir", "m"], p);
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("m/report.json")).unwrap()).unwrap();
    assert!(r["residual"].as_f64().unwrap() < 1e-8);
    assert!(r["error"].as_f64().unwrap() < 1e-8);
    assert!(p.join("m/v_re.csv").exists() && p.join("m/zeta_im.csv").exists());

    fs::write(p.join("z.json"), r#"{"grid": {"nx": 8, "ny": 8, "nz": 5}, "lambda": [1, 0], "rhs": {"kind": "zero"}}"#).unwrap();
    let out = cpe(&["resolvent", "z.json", "--output-dir", "z"], p);
    assert_eq!(out.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["v_l2"].as_f64().unwrap(), 0.0);
}
