//! JSON run configuration. Parsing works against the raw document so every
//! complaint names the offending location as a JSON pointer such as
//! `/task/nu/1`, and the five sections (`model`, `elements`, `task`,
//! `numerics`, `output`) are checked for unknown keys up front; a typo
//! fails the run before any numerics start.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::StateFn;
use crate::model::{self, SystemModel};
use crate::wavealg::{SimpleElement, WaveCovector};
use serde_json::Value;
use std::path::{Path, PathBuf};

/// A location inside the parsed document: the value plus the JSON pointer
/// that reaches it. All schema errors are raised through [`Cursor::fail`]
/// so they carry the pointer.
#[derive(Clone)]
pub struct Cursor<'a> {
    pub value: &'a Value,
    pub pointer: String,
}

fn escape(seg: &str) -> String {
    seg.replace('~', "~0").replace('/', "~1")
}

impl<'a> Cursor<'a> {
    pub fn root(value: &'a Value) -> Self {
        Cursor {
            value,
            pointer: String::new(),
        }
    }

    pub fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Config {
            pointer: if self.pointer.is_empty() {
                "/".into()
            } else {
                self.pointer.clone()
            },
            msg: msg.into(),
        }
    }

    fn child_pointer(&self, seg: &str) -> String {
        format!("{}/{}", self.pointer, escape(seg))
    }

    pub fn opt(&self, key: &str) -> Option<Cursor<'a>> {
        self.value.as_object().and_then(|m| m.get(key)).map(|v| Cursor {
            value: v,
            pointer: self.child_pointer(key),
        })
    }

    pub fn get(&self, key: &str) -> Result<Cursor<'a>> {
        self.opt(key).ok_or_else(|| Error::Config {
            pointer: self.child_pointer(key),
            msg: "missing required key".into(),
        })
    }

    /// Rejects keys outside `allowed`; the error points at the stray key.
    pub fn allow_keys(&self, allowed: &[&str]) -> Result<()> {
        let obj = self
            .value
            .as_object()
            .ok_or_else(|| self.fail("expected an object"))?;
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Config {
                    pointer: self.child_pointer(k),
                    msg: format!("unknown key (expected one of: {})", allowed.join(", ")),
                });
            }
        }
        Ok(())
    }

    pub fn str(&self) -> Result<&'a str> {
        self.value.as_str().ok_or_else(|| self.fail("expected a string"))
    }

    pub fn f64(&self) -> Result<f64> {
        self.value
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.fail("expected a finite number"))
    }

    pub fn u64(&self) -> Result<u64> {
        self.value
            .as_u64()
            .ok_or_else(|| self.fail("expected a non-negative integer"))
    }

    pub fn usize(&self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    pub fn bool(&self) -> Result<bool> {
        self.value.as_bool().ok_or_else(|| self.fail("expected a boolean"))
    }

    pub fn array(&self) -> Result<Vec<Cursor<'a>>> {
        let arr = self
            .value
            .as_array()
            .ok_or_else(|| self.fail("expected an array"))?;
        Ok(arr
            .iter()
            .enumerate()
            .map(|(i, v)| Cursor {
                value: v,
                pointer: format!("{}/{}", self.pointer, i),
            })
            .collect())
    }

    pub fn f64_array(&self) -> Result<Vec<f64>> {
        self.array()?.iter().map(|c| c.f64()).collect()
    }

    pub fn str_array(&self) -> Result<Vec<&'a str>> {
        self.array()?.iter().map(|c| c.str()).collect()
    }

    pub fn expr(&self) -> Result<Expr> {
        Expr::parse(self.str()?).map_err(|e| self.fail(format!("bad expression: {e}")))
    }
}

/// Numeric knobs shared across tasks; everything has a default so a config
/// can omit the whole section.
#[derive(Clone, Debug)]
pub struct Numerics {
    pub seed: u64,
    /// Differencing step for residual evaluation.
    pub h: f64,
    pub cfl: f64,
    /// Random state count for sampled checks.
    pub samples: usize,
    /// Grid density per axis for box sweeps.
    pub per_axis: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            seed: 0,
            h: 1e-4,
            cfl: 0.9,
            samples: 100,
            per_axis: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Whether frame-by-frame field histories go to disk (simulate2w).
    pub emit_frames: bool,
    /// Master switch for CSV artifacts; the JSON report is always written.
    pub csv: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            emit_frames: true,
            csv: true,
        }
    }
}

/// One parsed configuration document. Sections are extracted lazily so
/// task-specific parameters keep their pointers.
#[derive(Debug)]
pub struct RunConfig {
    doc: Value,
}

const TOP_KEYS: &[&str] = &["model", "elements", "task", "numerics", "output"];

impl RunConfig {
    pub fn from_str(src: &str) -> Result<RunConfig> {
        let doc: Value = serde_json::from_str(src)?;
        let cfg = RunConfig { doc };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let src = std::fs::read_to_string(path)?;
        Self::from_str(&src)
    }

    fn validate(&self) -> Result<()> {
        let root = self.root();
        root.allow_keys(TOP_KEYS)?;
        let task = root.get("task")?;
        task.get("command")?.str()?;
        if let Some(n) = root.opt("numerics") {
            n.allow_keys(&["seed", "h", "cfl", "samples", "per_axis"])?;
        }
        if let Some(o) = root.opt("output") {
            o.allow_keys(&["dir", "emit_frames", "csv"])?;
        }
        if let Some(m) = root.opt("model") {
            m.allow_keys(&["name", "n", "gamma", "p", "q", "matrices"])?;
        }
        if let Some(els) = root.opt("elements") {
            for el in els.array()? {
                el.allow_keys(&["gamma", "lambda", "normalized"])?;
            }
        }
        Ok(())
    }

    pub fn root(&self) -> Cursor<'_> {
        Cursor::root(&self.doc)
    }

    pub fn task(&self) -> Result<Cursor<'_>> {
        self.root().get("task")
    }

    pub fn command(&self) -> Result<String> {
        Ok(self.task()?.get("command")?.str()?.to_string())
    }

    pub fn numerics(&self) -> Result<Numerics> {
        let mut num = Numerics::default();
        if let Some(n) = self.root().opt("numerics") {
            if let Some(c) = n.opt("seed") {
                num.seed = c.u64()?;
            }
            if let Some(c) = n.opt("h") {
                num.h = c.f64()?;
            }
            if let Some(c) = n.opt("cfl") {
                num.cfl = c.f64()?;
            }
            if let Some(c) = n.opt("samples") {
                num.samples = c.usize()?;
            }
            if let Some(c) = n.opt("per_axis") {
                num.per_axis = c.usize()?;
            }
        }
        Ok(num)
    }

    pub fn output(&self) -> Result<OutputConfig> {
        let mut out = OutputConfig::default();
        if let Some(o) = self.root().opt("output") {
            if let Some(c) = o.opt("dir") {
                out.dir = PathBuf::from(c.str()?);
            }
            if let Some(c) = o.opt("emit_frames") {
                out.emit_frames = c.bool()?;
            }
            if let Some(c) = o.opt("csv") {
                out.csv = c.bool()?;
            }
        }
        Ok(out)
    }

    /// Builds the system from the model section. Registry models take
    /// `name` plus `n` (barotropic) or `gamma` (mhd); `name: "custom"`
    /// takes `p`, `q` and a `p x q x q` nest of expression strings in
    /// `u1..uq`.
    pub fn build_model(&self) -> Result<SystemModel> {
        let cur = self.root().get("model").map_err(|_| Error::Config {
            pointer: "/model".into(),
            msg: "this task needs a model section".into(),
        })?;
        let name = cur.get("name")?.str()?;
        if name == "custom" {
            let p = cur.get("p")?.usize()?;
            let q = cur.get("q")?.usize()?;
            let mats = cur.get("matrices")?;
            let outer = mats.array()?;
            let mut entries = Vec::with_capacity(outer.len());
            for m in &outer {
                let rows = m.array()?;
                let mut rows_out = Vec::with_capacity(rows.len());
                for row in &rows {
                    let cells = row.array()?;
                    let mut row_out = Vec::with_capacity(cells.len());
                    for cell in &cells {
                        row_out.push(cell.expr()?);
                    }
                    rows_out.push(row_out);
                }
                entries.push(rows_out);
            }
            SystemModel::custom("custom", p, q, entries, None)
                .map_err(|e| mats.fail(e.to_string()))
        } else {
            let n = match cur.opt("n") {
                Some(c) => Some(c.usize()?),
                None => None,
            };
            let gamma = match cur.opt("gamma") {
                Some(c) => Some(c.f64()?),
                None => None,
            };
            let name_cur = cur.get("name")?;
            model::registry_get(name, n, gamma).map_err(|e| name_cur.fail(e.to_string()))
        }
    }

    /// Builds the elements section against a model: `gamma` has q
    /// expressions in `u1..uq`, `lambda` has p.
    pub fn build_elements(&self, sys: &SystemModel) -> Result<Vec<SimpleElement>> {
        let cur = self.root().get("elements").map_err(|_| Error::Config {
            pointer: "/elements".into(),
            msg: "this task needs an elements section".into(),
        })?;
        let mut out = Vec::new();
        for el in cur.array()? {
            let gc = el.get("gamma")?;
            let gamma = parse_field(&gc, sys.q(), sys.q())?;
            let lc = el.get("lambda")?;
            let lam_fn = parse_field(&lc, sys.q(), sys.p())?;
            let normalized = match el.opt("normalized") {
                Some(c) => c.bool()?,
                None => false,
            };
            let lambda = if normalized {
                WaveCovector::normalized(lam_fn)
            } else {
                WaveCovector::new(lam_fn)
            };
            out.push(SimpleElement::new(gamma, lambda));
        }
        if out.is_empty() {
            return Err(cur.fail("elements list is empty"));
        }
        Ok(out)
    }
}

/// Expression list -> StateFn over `u1..u{dim_in}`, with pointer-carrying
/// errors for arity mismatches and stray variables.
pub fn parse_field(cur: &Cursor, dim_in: usize, dim_out: usize) -> Result<StateFn> {
    let srcs = cur.str_array()?;
    if srcs.len() != dim_out {
        return Err(cur.fail(format!(
            "expected {} components, got {}",
            dim_out,
            srcs.len()
        )));
    }
    StateFn::parse(dim_in, "u", &srcs).map_err(|e| cur.fail(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_task_command_points_at_it() {
        let err = RunConfig::from_str(r#"{"task": {}}"#).unwrap_err();
        match err {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/task/command"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let err =
            RunConfig::from_str(r#"{"task": {"command": "surface"}, "modle": {}}"#).unwrap_err();
        match err {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/modle"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_expression_carries_element_pointer() {
        let cfg = RunConfig::from_str(
            r#"{
                "task": {"command": "check-involutivity"},
                "model": {"name": "burgers"},
                "elements": [{"gamma": ["1"], "lambda": ["1 +", "2"]}]
            }"#,
        )
        .unwrap();
        let sys = cfg.build_model().unwrap();
        let err = cfg.build_elements(&sys).unwrap_err();
        match err {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/elements/0/lambda"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn numerics_defaults_and_overrides() {
        let cfg = RunConfig::from_str(
            r#"{"task": {"command": "residual"}, "numerics": {"seed": 7, "per_axis": 3}}"#,
        )
        .unwrap();
        let n = cfg.numerics().unwrap();
        assert_eq!(n.seed, 7);
        assert_eq!(n.per_axis, 3);
        assert_eq!(n.h, 1e-4);
        assert_eq!(n.cfl, 0.9);
    }

    #[test]
    fn registry_model_builds() {
        let cfg = RunConfig::from_str(
            r#"{"task": {"command": "residual"}, "model": {"name": "barotropic", "n": 2}}"#,
        )
        .unwrap();
        let sys = cfg.build_model().unwrap();
        assert_eq!(sys.p(), 3);
        assert_eq!(sys.q(), 3);
    }

    #[test]
    fn custom_model_shape_errors_point_at_matrices() {
        let cfg = RunConfig::from_str(
            r#"{
                "task": {"command": "residual"},
                "model": {"name": "custom", "p": 2, "q": 1, "matrices": [[["1"]]]}
            }"#,
        )
        .unwrap();
        let err = cfg.build_model().unwrap_err();
        match err {
            Error::Config { pointer, .. } => assert_eq!(pointer, "/model/matrices"),
            e => panic!("unexpected {e:?}"),
        }
    }
}
