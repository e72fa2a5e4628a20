use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use tempfile::TempDir;

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_str()
        .unwrap()
        .to_string()
}

fn sovsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sovsim"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Out(TempDir);

impl Out {
    fn new() -> Self {
        Out(tempfile::tempdir().unwrap())
    }
    fn arg(&self) -> String {
        self.0.path().to_str().unwrap().to_string()
    }
    fn file(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }
    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.file(name)).unwrap()
    }
}

#[test]
fn missing_config_is_a_config_error() {
    let o = sovsim(&["run", "/nonexistent/model.cfg"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("cannot read config"));
}

#[test]
fn zero_steps_writes_only_the_initial_frame() {
    let out = Out::new();
    let o = sovsim(&[
        "run",
        &scenario("baseline.cfg"),
        "--steps",
        "0",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(out.read("trajectory.csv").lines().count(), 2);
    let manifest: serde_json::Value = serde_json::from_str(&out.read("manifest.json")).unwrap();
    assert_eq!(manifest["outputs"][0], "trajectory.csv");
}

#[test]
fn json_trajectory_and_plot() {
    let out = Out::new();
    let o = sovsim(&[
        "run",
        &scenario("baseline.cfg"),
        "--steps",
        "5",
        "--format",
        "json",
        "--plot",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&out.read("trajectory.json")).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);
    assert!(out.read("trajectory.svg").starts_with("<svg"));
}

#[test]
fn unknown_keys_are_rejected_unless_lenient() {
    let dir = Out::new();
    let text = std::fs::read_to_string(scenario("baseline.cfg")).unwrap()
        + "\n[extras]\ncolour = \"blue\"\n";
    let path = dir.file("model.cfg");
    std::fs::write(&path, text).unwrap();
    let path = path.to_str().unwrap();
    let out = dir.file("out");
    let out = out.to_str().unwrap();

    let strict = sovsim(&["run", path, "--steps", "1", "--out", out]);
    assert_eq!(code(&strict), 1);
    assert!(stderr(&strict).contains("extras"));

    let lenient = sovsim(&["run", path, "--steps", "1", "--out", out, "--lenient"]);
    assert_eq!(code(&lenient), 0);
    assert!(stderr(&lenient).contains("warning"));
}

#[test]
fn zero_tolerance_is_rejected() {
    let o = sovsim(&[
        "threshold",
        &scenario("erosion.cfg"),
        "--param",
        "economy.friction_decay",
        "--lo",
        "0",
        "--hi",
        "0.05",
        "--tol",
        "0",
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("tol must be > 0"));
}

#[test]
fn bounded_scenario_has_no_bracket() {
    let out = Out::new();
    let o = sovsim(&[
        "threshold",
        &scenario("baseline.cfg"),
        "--param",
        "economy.friction_decay",
        "--lo",
        "0",
        "--hi",
        "0.5",
        "--runs",
        "4",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("no bracket: transfer never occurs"));
    assert!(!out.file("threshold.json").exists());
}

#[test]
fn erosion_threshold_lies_in_the_bracket() {
    let out = Out::new();
    let o = sovsim(&[
        "threshold",
        &scenario("erosion.cfg"),
        "--param",
        "economy.friction_decay",
        "--lo",
        "0",
        "--hi",
        "0.05",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let printed: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    let result: serde_json::Value = serde_json::from_str(&out.read("threshold.json")).unwrap();
    assert_eq!(result["critical_value"].as_f64().unwrap(), printed);
    assert!((0.0..=0.05).contains(&printed));
}

#[test]
fn erosion_sweep_is_monotone_in_friction_decay() {
    let out = Out::new();
    let o = sovsim(&[
        "sweep",
        &scenario("erosion.cfg"),
        "--param",
        "economy.friction_decay",
        "--grid",
        "0:0.1:11",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(out.file("sweep.csv")).unwrap();
    let col = reader
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "transfer_rate")
        .unwrap();
    let rates: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[col].parse().unwrap())
        .collect();
    assert_eq!(rates.len(), 11);
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    assert!(out.file("sweep.svg").exists());
}

#[test]
fn two_point_sweep_has_two_rows() {
    let out = Out::new();
    let o = sovsim(&[
        "sweep",
        &scenario("baseline.cfg"),
        "--param",
        "boundaries.erosion_rate",
        "--grid",
        "0:0.1:2",
        "--runs",
        "3",
        "--steps",
        "10",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(out.read("sweep.csv").lines().count(), 3);
}

#[test]
fn p5_needs_open_boundaries() {
    let out = Out::new();
    let o = sovsim(&[
        "verify",
        "--props",
        "P5",
        "--config",
        &scenario("baseline.cfg"),
        "--trials",
        "5",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("precondition"));
}

#[test]
fn theorem_scenario_keeps_ai_mass_at_zero() {
    let out = Out::new();
    let o = sovsim(&[
        "verify",
        "--props",
        "T1",
        "--config",
        &scenario("theorem.cfg"),
        "--trials",
        "50",
        "--out",
        &out.arg(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&out.read("report.json")).unwrap();
    let report = &v["reports"][0];
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["witness"].as_f64().unwrap(), 0.0);
}

#[test]
fn verify_all_passes_within_budget() {
    let out = Out::new();
    let start = Instant::now();
    let o = sovsim(&["verify", "--out", &out.arg()]);
    assert!(start.elapsed() < Duration::from_secs(300));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        stdout.lines().filter(|l| l.contains(": pass")).count(),
        6,
        "{stdout}"
    );
    let v: serde_json::Value = serde_json::from_str(&out.read("report.json")).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 6);
}

#[test]
fn unknown_property_is_a_config_error() {
    let out = Out::new();
    let o = sovsim(&["verify", "--props", "P9", "--out", &out.arg()]);
    assert_eq!(code(&o), 1);
}
