//! Deterministic run artifacts. `report.json` carries the verdict, result
//! values and the tolerances actually used, serialized with sorted keys and
//! no wall-clock content, so a fixed config and seed reproduce it byte for
//! byte; timestamps live in a separate `meta.json`. Every file is written
//! to a temporary name in the target directory and renamed into place, so
//! readers never observe a half-written artifact.

use crate::error::Result;
use serde_json::{json, Map, Value};
use std::fs;
use std::path::{Path, PathBuf};

/// JSON value for a float; non-finite values (which JSON cannot hold) are
/// stored as strings so they stay visible instead of becoming null.
pub fn num(v: f64) -> Value {
    match serde_json::Number::from_f64(v) {
        Some(n) => Value::Number(n),
        None => Value::String(format!("{v}")),
    }
}

/// Shortest round-trip decimal for CSV cells.
pub fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

pub struct ReportBuilder {
    command: String,
    verdict: bool,
    tolerances: Map<String, Value>,
    results: Map<String, Value>,
    artifacts: Vec<String>,
    failures: Vec<String>,
}

impl ReportBuilder {
    pub fn new(command: impl Into<String>) -> Self {
        ReportBuilder {
            command: command.into(),
            verdict: true,
            tolerances: Map::new(),
            results: Map::new(),
            artifacts: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn result(&mut self, key: &str, value: Value) -> &mut Self {
        self.results.insert(key.to_string(), value);
        self
    }

    pub fn tolerance(&mut self, key: &str, tol: f64) -> &mut Self {
        self.tolerances.insert(key.to_string(), num(tol));
        self
    }

    /// Records `key = value` with its tolerance and folds `value <= tol`
    /// into the verdict. Returns whether this gate passed.
    pub fn gate(&mut self, key: &str, value: f64, tol: f64) -> bool {
        self.tolerance(key, tol);
        self.result(key, num(value));
        let ok = value.is_finite() && value <= tol;
        if !ok {
            self.fail(format!("{key} = {value:.3e} exceeds {tol:.3e}"));
        }
        ok
    }

    /// A gate with zero slack: for identities the construction makes exact.
    pub fn gate_exact(&mut self, key: &str, value: f64) -> bool {
        self.gate(key, value, 0.0)
    }

    pub fn fail(&mut self, why: impl Into<String>) -> &mut Self {
        self.verdict = false;
        self.failures.push(why.into());
        self
    }

    pub fn artifact(&mut self, name: &str) -> &mut Self {
        self.artifacts.push(name.to_string());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict
    }

    pub fn finish(self) -> Value {
        json!({
            "command": self.command,
            "verdict": if self.verdict { "pass" } else { "fail" },
            "failures": self.failures,
            "tolerances": Value::Object(self.tolerances),
            "results": Value::Object(self.results),
            "artifacts": self.artifacts,
            "version": env!("CARGO_PKG_VERSION"),
        })
    }
}

/// Atomic write: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = dir.join(format!(".{}.tmp{}", name, std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn write_report(dir: &Path, report: &Value) -> Result<PathBuf> {
    let path = dir.join("report.json");
    write_json(&path, report)?;
    Ok(path)
}

/// Wall-clock sidecar; the only artifact allowed to differ between
/// identical runs.
pub fn write_meta(dir: &Path) -> Result<PathBuf> {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let path = dir.join("meta.json");
    write_json(&path, &json!({ "created_unix_ms": now }))?;
    Ok(path)
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}
