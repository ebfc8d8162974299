//! Black-box tests of the `kwave` binary: exit-code contract, JSON-pointer
//! schema errors, artifact layout, and byte-level determinism of report.json.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn kwave(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwave"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn malformed_config_exits_one_with_pointer() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        r#"{"task": {"command": "residual"}, "modle": {"name": "burgers"}}"#,
    );
    let out = kwave(&["residual", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("/modle"), "stderr: {err}");
}

#[test]
fn unknown_task_key_is_pointed_at() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        r#"{"task": {"command": "simulate2w", "nu": ["1", "-1"], "gird": {}, "t_end": 1.0,
            "grid": {"x0": -1.0, "x1": 1.0, "n": 101},
            "bumps": [{"amp": 0.1, "center": -0.5, "half_width": 0.2},
                      {"amp": 0.1, "center": 0.5, "half_width": 0.2}]}}"#,
    );
    let out = kwave(&["simulate2w", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/task/gird"), "stderr: {}", stderr(&out));
}

#[test]
fn command_mismatch_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "cfg.json",
        r#"{"task": {"command": "surface", "base": [0.0]}}"#,
    );
    let out = kwave(&["abelianize", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/task/command"), "stderr: {}", stderr(&out));
}

#[test]
fn usage_errors_exit_one_help_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let help = kwave(&["--help"], tmp.path());
    assert_eq!(help.status.code(), Some(0));
    let unknown = kwave(&["frobnicate"], tmp.path());
    assert_eq!(unknown.status.code(), Some(1));
    let missing = kwave(&["surface"], tmp.path());
    assert_eq!(missing.status.code(), Some(1));
}

const ELASTIC: &str = r#"{
  "task": {
    "command": "simulate2w",
    "nu": ["1 + 0.3*r2", "-1 + 0.3*r1"],
    "grid": {"x0": -10.0, "x1": 10.0, "n": 1201},
    "bumps": [
      {"amp": 0.2, "center": -2.5, "half_width": 1.0},
      {"amp": 0.2, "center": 2.5, "half_width": 1.0}
    ],
    "t_end": 6.0,
    "expect": "elastic"
  },
  "output": {"dir": "OUT"}
}"#;

#[test]
fn simulate2w_passes_and_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    let outdir = tmp.path().join("run");
    let cfg = write(
        tmp.path(),
        "elastic.json",
        &ELASTIC.replace("OUT", outdir.to_str().unwrap()),
    );
    let out = kwave(&["simulate2w", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));

    let rep = report(&outdir);
    assert_eq!(rep["verdict"], "pass");
    assert_eq!(rep["command"], "simulate2w");
    assert_eq!(rep["results"]["verdict_elasticity"], "elastic");
    // Every artifact named in the report must exist; timestamps live only
    // in meta.json so the report itself stays reproducible.
    for art in rep["artifacts"].as_array().unwrap() {
        let name = art.as_str().unwrap();
        assert!(outdir.join(name).exists(), "missing artifact {name}");
    }
    assert!(rep.get("created_unix_ms").is_none());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outdir.join("meta.json")).unwrap()).unwrap();
    assert!(meta["created_unix_ms"].as_u64().is_some());
    // frames default on, so the requested run produces per-frame output
    let frames = fs::read_to_string(outdir.join("frames.csv")).unwrap();
    assert!(frames.lines().count() > 100);
    assert!(frames.starts_with("t,x,r1,r2"));
}

#[test]
fn verdict_failure_exits_two() {
    let tmp = TempDir::new().unwrap();
    let outdir = tmp.path().join("run");
    // Expecting the wrong verdict turns a clean run into a reported failure.
    let cfg = write(
        tmp.path(),
        "cfg.json",
        &ELASTIC
            .replace("OUT", outdir.to_str().unwrap())
            .replace("\"expect\": \"elastic\"", "\"expect\": \"inelastic\""),
    );
    let out = kwave(&["simulate2w", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let rep = report(&outdir);
    assert_eq!(rep["verdict"], "fail");
    assert!(!rep["failures"].as_array().unwrap().is_empty());
}

#[test]
fn path_dependent_surface_exits_two() {
    let tmp = TempDir::new().unwrap();
    let outdir = tmp.path().join("run");
    let cfg = write(
        tmp.path(),
        "cfg.json",
        &format!(
            r#"{{
  "task": {{"command": "surface", "base": [1.0, 1.0], "grid_half": 0.3, "grid_n": 5}},
  "model": {{"name": "barotropic", "n": 1}},
  "elements": [
    {{"gamma": ["1", "0"], "lambda": ["1", "0"]}},
    {{"gamma": ["0", "u1"], "lambda": ["0", "1"]}}
  ],
  "output": {{"dir": "{}"}}
}}"#,
            outdir.to_str().unwrap()
        ),
    );
    let out = kwave(&["surface", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let rep = report(&outdir);
    assert_eq!(rep["verdict"], "fail");
}

#[test]
fn report_bytes_are_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "inv.json",
        r#"{
  "task": {"command": "check-involutivity"},
  "model": {"name": "barotropic", "n": 1},
  "elements": [
    {"gamma": ["1", "0"], "lambda": ["1", "0"]},
    {"gamma": ["0", "1"], "lambda": ["0", "1"]}
  ],
  "numerics": {"seed": 42}
}"#,
    );
    let d1 = tmp.path().join("a");
    let d2 = tmp.path().join("b");
    for d in [&d1, &d2] {
        let out = kwave(
            &["check-involutivity", "--config", &cfg, "--out", d.to_str().unwrap()],
            tmp.path(),
        );
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    let a = fs::read(d1.join("report.json")).unwrap();
    let b = fs::read(d2.join("report.json")).unwrap();
    assert_eq!(a, b, "fixed-seed reports must match byte for byte");
}

#[test]
fn showcase_runs_from_flags_alone() {
    let tmp = TempDir::new().unwrap();
    let outdir = tmp.path().join("mhd");
    let out = kwave(
        &[
            "showcase",
            "mhd",
            "--psi",
            "0.2*sin(x1)*sin(x2)",
            "--out",
            outdir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let rep = report(&outdir);
    assert_eq!(rep["verdict"], "pass");
    assert_eq!(rep["results"]["mhd_alignment"], 0.0);
    assert_eq!(rep["results"]["mhd_stationarity"], 0.0);
    let csv = fs::read_to_string(outdir.join("mhd_fields.csv")).unwrap();
    assert!(csv.starts_with("x1,x2,rho,p,v1,v2,v3,H1,H2,H3"));
    assert_eq!(csv.lines().count(), 1 + 41 * 41);
}

#[test]
fn showcase_rejects_overdriven_stream_function() {
    let tmp = TempDir::new().unwrap();
    let out = kwave(&["showcase", "mhd", "--psi", "1.2*x1"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error:"), "stderr: {}", stderr(&out));
}

#[test]
fn pfaffian_eval_cross_checks_the_direct_solver() {
    let tmp = TempDir::new().unwrap();
    let outdir = tmp.path().join("run");
    let cfg = write(
        tmp.path(),
        "p.json",
        &format!(
            r#"{{
  "task": {{
    "command": "pfaffian-eval",
    "k": 1, "p": 2,
    "profile": ["0.3*tanh(r1)"],
    "lambda": [["-u1", "1"]],
    "points": [[0.0, 0.4], [0.1, 0.8], [0.5, -0.3]]
  }},
  "output": {{"dir": "{}"}}
}}"#,
            outdir.to_str().unwrap()
        ),
    );
    let out = kwave(&["pfaffian-eval", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let rep = report(&outdir);
    assert_eq!(rep["results"]["points_solved"], 3);
    let delta = rep["results"]["cross_method_max_delta"].as_f64().unwrap();
    assert!(delta <= 1e-10, "cross-method delta {delta}");
}

#[test]
fn thread_cap_is_respected() {
    let tmp = TempDir::new().unwrap();
    let outdir = tmp.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_kwave"))
        .args([
            "showcase",
            "barotropic",
            "--out",
            outdir.to_str().unwrap(),
        ])
        .env("KWAVE_THREADS", "1")
        .current_dir(tmp.path())
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert_eq!(report(&outdir)["verdict"], "pass");
}
