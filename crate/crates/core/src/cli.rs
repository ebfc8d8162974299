//! Batch front door. One JSON config drives one subcommand; every run
//! writes a deterministic `report.json` (plus CSV artifacts and a
//! wall-clock `meta.json`) into the output directory and exits 0 on a
//! passing verdict, 2 on a failing verdict, 1 on any error. `KWAVE_THREADS`
//! caps the worker pool.

use crate::config::{parse_field, Cursor, Numerics, OutputConfig, RunConfig};
use crate::error::{Error, Result};
use crate::field::StateFn;
use crate::implicit::{pde_residual, ImplicitSolution, ProfileMap};
use crate::involution::{self, AbelianizeOptions, BracketVerification, LeafGrid, LeafTable};
use crate::report::{self, fmt_num, num, ReportBuilder};
use crate::showcase::{self, alfven_build, alfven_verify};
use crate::surface::{integrate_surface, Axis, GridAxes, SurfaceOptions};
use crate::wavealg::WaveCovector;
use crate::waves1d::{self, Bump, DiagonalSystem, Grid1d, InitialData, Scheme, Verdict};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::ffi::OsString;
use std::path::PathBuf;

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help/version print with code 0; usage mistakes are errors (1),
            // never the verdict-fail code
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn init_threads() {
    if let Ok(s) = std::env::var("KWAVE_THREADS") {
        if let Ok(n) = s.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "kwave",
    version,
    about = "Riemann k-wave toolkit: wave elements, implicit solutions, elastic two-wave runs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check bracket and covector involutivity of the configured elements
    #[command(name = "check-involutivity")]
    CheckInvolutivity(CommonArgs),
    /// Rescale a pair of fields to commute and verify the result
    #[command(name = "abelianize")]
    Abelianize(CommonArgs),
    /// Integrate a wave surface and audit path independence
    #[command(name = "surface")]
    Surface(CommonArgs),
    /// Solve an implicit k-wave solution at configured points
    #[command(name = "implicit-eval")]
    ImplicitEval(CommonArgs),
    /// Solve the invariant-space relations at configured points
    #[command(name = "pfaffian-eval")]
    PfaffianEval(CommonArgs),
    /// Run the 1+1D two-wave interaction and judge elasticity
    #[command(name = "simulate2w")]
    Simulate2w(CommonArgs),
    /// Verify the shipped solution families (barotropic, mhd)
    #[command(name = "showcase")]
    Showcase(ShowcaseArgs),
    /// Evaluate PDE residuals of a configured implicit solution over a box
    #[command(name = "residual")]
    Residual(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Output directory (overrides output.dir)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// RNG seed (overrides numerics.seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Force frame-by-frame CSV histories on
    #[arg(long)]
    emit_frames: bool,
}

#[derive(Args)]
struct ShowcaseArgs {
    /// Family to verify: barotropic, mhd or all
    #[arg(default_value = "all")]
    family: String,
    /// Stream function in x1, x2 for the mhd family
    #[arg(long)]
    psi: Option<String>,
    /// Optional JSON configuration file
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

struct Job<'a> {
    cfg: &'a RunConfig,
    num: Numerics,
    out: OutputConfig,
}

impl Job<'_> {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.num.seed)
    }

    fn csv(
        &self,
        rb: &mut ReportBuilder,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<()> {
        if self.out.csv {
            report::write_csv(&self.out.dir.join(name), header, rows)?;
            rb.artifact(name);
        }
        Ok(())
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::CheckInvolutivity(a) => standard(a, "check-involutivity", task_check_involutivity),
        Cmd::Abelianize(a) => standard(a, "abelianize", task_abelianize),
        Cmd::Surface(a) => standard(a, "surface", task_surface),
        Cmd::ImplicitEval(a) => standard(a, "implicit-eval", task_implicit_eval),
        Cmd::PfaffianEval(a) => standard(a, "pfaffian-eval", task_pfaffian_eval),
        Cmd::Simulate2w(a) => standard(a, "simulate2w", task_simulate2w),
        Cmd::Residual(a) => standard(a, "residual", task_residual),
        Cmd::Showcase(a) => showcase_cmd(a),
    }
}

fn standard(
    args: CommonArgs,
    name: &'static str,
    task_fn: fn(&Job, &Cursor, &mut ReportBuilder) -> Result<()>,
) -> Result<bool> {
    let cfg = RunConfig::from_path(&args.config)?;
    let command = cfg.command()?;
    if command != name {
        return Err(cfg
            .task()?
            .get("command")?
            .fail(format!("config is for '{command}', invoked '{name}'")));
    }
    let mut num = cfg.numerics()?;
    if let Some(s) = args.seed {
        num.seed = s;
    }
    let mut out = cfg.output()?;
    if let Some(d) = args.out {
        out.dir = d;
    }
    if args.emit_frames {
        out.emit_frames = true;
    }
    std::fs::create_dir_all(&out.dir)?;
    let job = Job {
        cfg: &cfg,
        num,
        out,
    };
    let mut rb = ReportBuilder::new(name);
    let task = cfg.task()?;
    task_fn(&job, &task, &mut rb)?;
    finish(&job.out, rb, name)
}

fn finish(out: &OutputConfig, rb: ReportBuilder, name: &str) -> Result<bool> {
    let pass = rb.passed();
    let path = report::write_report(&out.dir, &rb.finish())?;
    report::write_meta(&out.dir)?;
    println!(
        "{}: {} ({})",
        name,
        if pass { "pass" } else { "fail" },
        path.display()
    );
    Ok(pass)
}

fn opt_f64(task: &Cursor, key: &str) -> Result<Option<f64>> {
    task.opt(key).map(|c| c.f64()).transpose()
}

fn opt_usize(task: &Cursor, key: &str) -> Result<Option<usize>> {
    task.opt(key).map(|c| c.usize()).transpose()
}

fn opt_num(v: Option<f64>) -> Value {
    v.map(num).unwrap_or(Value::Null)
}

/// Tensor grid over an axis-aligned box.
fn tensor_points(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let d = lo.len();
    let lin = |a: f64, b: f64, i: usize| {
        if per_axis == 1 {
            0.5 * (a + b)
        } else {
            a + (b - a) * i as f64 / (per_axis - 1) as f64
        }
    };
    let mut pts = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        pts.push((0..d).map(|a| lin(lo[a], hi[a], idx[a])).collect());
        let mut c = 0;
        loop {
            idx[c] += 1;
            if idx[c] < per_axis {
                break;
            }
            idx[c] = 0;
            c += 1;
            if c >= d {
                return pts;
            }
        }
    }
}

// --- check-involutivity ---------------------------------------------------

fn task_check_involutivity(job: &Job, task: &Cursor, rb: &mut ReportBuilder) -> Result<()> {
    task.allow_keys(&[
        "command",
        "tol",
        "tol_abelian",
        "base",
        "grid_half",
        "grid_n",
    ])?;
    let sys = job.cfg.build_model()?;
    let elements = job.cfg.build_elements(&sys)?;
    let tol = opt_f64(task, "tol")?.unwrap_or(1e-8);
    let tol_abelian = opt_f64(task, "tol_abelian")?.unwrap_or(1e-8);
    let mut rng = job.rng();
    let states = sys.domain().sample_n(&mut rng, job.num.samples.max(10));

    let span = involution::check_span_condition(&elements, &states, tol)?;
    let gamma_ok = span.iter().all(|s| s.in_span);
    rb.tolerance("span_relative", tol);
    rb.result("states_sampled", json!(states.len()));
    rb.result(
        "pairs",
        json!(span
            .iter()
            .map(|s| json!({
                "pair": [s.pair.0, s.pair.1],
                "max_residual": num(s.max_residual),
                "in_span": s.in_span,
            }))
            .collect::<Vec<_>>()),
    );
    if !gamma_ok {
        rb.fail("a commutator leaves its pair span");
    }

    let probe = &states[..states.len().min(20)];
    let abel = involution::check_abelian(&elements, probe, tol_abelian)?;
    rb.result("abelian", json!(abel.abelian));
    rb.result("abelian_max_bracket", num(abel.max_residual));

    // The covector condition is checked on a surface chart, which needs
    // commuting fields; non-Abelian input reports the span verdict only and
    // points at the abelianize step.
    if abel.abelian && elements.len() >= 2 {
        let base = match task.opt("base") {
            Some(c) => c.f64_array()?,
            None => sys.domain().sample(&mut rng),
        };
        let half = opt_f64(task, "grid_half")?.unwrap_or(0.3);
        let n = opt_usize(task, "grid_n")?.unwrap_or(9);
        let axes = GridAxes::square(elements.len(), -half, half, n)?;
        let mut opts = SurfaceOptions::default();
        opts.seed = job.num.seed;
        opts.domain = Some(sys.domain().clone());
        match integrate_surface(&elements, &base, axes, &opts) {
            Ok(surface) => {
                let inv = involution::check_lambda_involutivity(&elements, &surface, tol)?;
                let max_cov = inv
                    .covectors
                    .iter()
                    .map(|c| c.max_residual)
                    .fold(0.0, f64::max);
                rb.result("lambda_in_span", json!(inv.lambda_in_span));
                rb.result("lambda_max_residual", num(max_cov));
                if !inv.lambda_in_span {
                    rb.fail("a covector derivative leaves its pair span");
                }
            }
            Err(e) => {
                rb.result("lambda_in_span", Value::Null);
                rb.fail(format!("covector-check surface failed: {e}"));
            }
        }
    } else if elements.len() >= 2 {
        rb.result("lambda_in_span", Value::Null);
        rb.result(
            "note",
            json!("fields do not commute; run abelianize before the covector check"),
        );
    }
    Ok(())
}

// --- abelianize -----------------------------------------------------------

fn leaf_rows(table: &LeafTable, q: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i1 in 0..table.s1.len() {
        for i2 in 0..table.s2.len() {
            let (Some(f), Some(u)) = (table.value(i1, i2), table.state(i1, i2)) else {
                continue;
            };
            let mut row = vec![fmt_num(table.s1[i1]), fmt_num(table.s2[i2]), fmt_num(f)];
            for c in 0..q {
                row.push(fmt_num(u[c]));
            }
            rows.push(row);
        }
    }
    rows
}

fn task_abelianize(job: &Job, task: &Cursor, rb: &mut ReportBuilder) -> Result<()> {
    task.allow_keys(&[
        "command",
        "base",
        "half1",
        "n1",
        "half2",
        "n2",
        "tol_span",
        "tol_abel",
        "verify_samples",
    ])?;
    let sys = job.cfg.build_model()?;
    let elements = job.cfg.build_elements(&sys)?;
    if elements.len() != 2 {
        return Err(task.fail(format!(
            "abelianize works on exactly two elements, got {}",
            elements.len()
        )));
    }
    let base = task.get("base")?.f64_array()?;
    let grid = LeafGrid::symmetric(
        opt_f64(task, "half1")?.unwrap_or(0.5),
        opt_usize(task, "n1")?.unwrap_or(41),
        opt_f64(task, "half2")?.unwrap_or(0.5),
        opt_usize(task, "n2")?.unwrap_or(41),
    )?;
    let mut opts = AbelianizeOptions::default();
    if let Some(v) = opt_f64(task, "tol_span")? {
        opts.tol_span = v;
    }
    if let Some(v) = opt_f64(task, "tol_abel")? {
        opts.tol_abel = v;
    }
    if let Some(v) = opt_usize(task, "verify_samples")? {
        opts.verify_samples = v;
    }
    let pair = involution::abelianize_pair(
        &elements[0].gamma,
        &elements[1].gamma,
        &base,
        &grid,
        &opts,
    )?;
    rb.result("already_abelian", json!(pair.already_abelian));
    rb.result("truncated", json!(pair.truncated));
    rb.result(
        "verification",
        json!(match pair.verification {
            BracketVerification::FlowShooting => "flow-shooting",
            BracketVerification::ConstructionEstimate => "construction-estimate",
        }),
    );
    rb.result("verified_samples", json!(pair.verified_samples));
    rb.result("max_span_residual", num(pair.max_span_residual));
    rb.result("leaf_valid_f1", json!(pair.f1.valid_count()));
    rb.result("leaf_valid_f2", json!(pair.f2.valid_count()));
    rb.gate(
        "max_bracket_residual",
        pair.max_bracket_residual,
        pair.bracket_threshold,
    );
    if pair.truncated {
        rb.fail("a degeneracy truncated the leaf");
    }
    let q = sys.q();
    let mut header = vec!["s1".to_string(), "s2".to_string(), "f".to_string()];
    for c in 0..q {
        header.push(format!("u{}", c + 1));
    }
    let href: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    job.csv(rb, "leaf_f1.csv", &href, &leaf_rows(&pair.f1, q))?;
    job.csv(rb, "leaf_f2.csv", &href, &leaf_rows(&pair.f2, q))?;
    Ok(())
}

// --- surface --------------------------------------------------------------

fn task_surface(job: &Job, task: &Cursor, rb: &mut ReportBuilder) -> Result<()> {
    task.allow_keys(&[
        "command",
        "base",
        "axes",
        "grid_half",
        "grid_n",
        "step_tol",
        "tol_path",
        "audit_fraction",
        "pre_check",
    ])?;
    let sys = job.cfg.build_model()?;
    let elements = job.cfg.build_elements(&sys)?;
    let base = task.get("base")?.f64_array()?;
    let axes = match task.opt("axes") {
        Some(ax) => {
            let mut list = Vec::new();
            for a in ax.array()? {
                list.push(
                    Axis::new(a.get("min")?.f64()?, a.get("max")?.f64()?, a.get("n")?.usize()?)
                        .map_err(|e| a.fail(e.to_string()))?,
                );
            }
            GridAxes::new(list)
        }
        None => {
            let half = opt_f64(task, "grid_half")?.unwrap_or(0.5);
            let n = opt_usize(task, "grid_n")?.unwrap_or(21);
            GridAxes::square(elements.len(), -half, half, n)?
        }
    };
    let mut opts = SurfaceOptions::default();
    opts.seed = job.num.seed;
    opts.domain = Some(sys.domain().clone());
    if let Some(v) = opt_f64(task, "step_tol")? {
        opts.step_tol = v;
    }
    if let Some(v) = opt_f64(task, "tol_path")? {
        opts.tol_path = v;
    }
    if let Some(v) = opt_f64(task, "audit_fraction")? {
        opts.audit_fraction = v;
    }
    if let Some(c) = task.opt("pre_check") {
        opts.pre_check = c.bool()?;
    }
    rb.tolerance("path_audit", opts.tol_path);
    match integrate_surface(&elements, &base, axes, &opts) {
        Ok(surface) => {
            rb.result("nodes_total", json!(surface.axes().node_count()));
            rb.result("nodes_valid", json!(surface.valid_count()));
            rb.result("audit_checked", json!(surface.audit.checked));
            rb.result("audit_max_residual", num(surface.audit.max_residual));
            let k = surface.axes().k();
            let q = surface.q();
            let mut header: Vec<String> = (0..k).map(|i| format!("r{}", i + 1)).collect();
            header.extend((0..q).map(|i| format!("u{}", i + 1)));
            let href: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
            let mut rows = Vec::new();
            for flat in 0..surface.axes().node_count() {
                let idx = surface.axes().unflat(flat);
                let Some(state) = surface.state_at(&idx) else {
                    continue;
                };
                let mut row: Vec<String> = surface
                    .axes()
                    .coords(&idx)
                    .into_iter()
                    .map(fmt_num)
                    .collect();
                row.extend(state.iter().copied().map(fmt_num));
                rows.push(row);
            }
            job.csv(rb, "surface_nodes.csv", &href, &rows)?;
        }
        Err(Error::PathDependent { residual, node }) => {
            rb.result("audit_max_residual", num(residual));
            rb.fail(format!("path-dependent integration at node {node:?}"));
        }
        Err(Error::SpanCondition(msg)) => {
            rb.fail(format!("pre-check rejected the fields: {msg}"));
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

// --- implicit-eval / pfaffian-eval ---------------------------------------

const IMPLICIT_KEYS: &[&str] = &["command", "k", "p", "profile", "lambda", "psi", "points"];

fn build_implicit(task: &Cursor) -> Result<ImplicitSolution> {
    let k = task.get("k")?.usize()?;
    let p = task.get("p")?.usize()?;
    let prof = task.get("profile")?;
    let srcs = prof.str_array()?;
    let f = StateFn::parse(k, "r", &srcs).map_err(|e| prof.fail(e.to_string()))?;
    let q = f.dim_out();
    let lam_cur = task.get("lambda")?;
    let lam_list = lam_cur.array()?;
    if lam_list.len() != k {
        return Err(lam_cur.fail(format!("expected {} covectors, got {}", k, lam_list.len())));
    }
    let mut lambdas = Vec::with_capacity(k);
    for c in &lam_list {
        lambdas.push(WaveCovector::new(parse_field(c, q, p)?));
    }
    let mut sol = ImplicitSolution::new(
        "configured",
        ProfileMap::Closed { f, df: Vec::new() },
        lambdas,
        p,
    )
    .map_err(|e| task.fail(e.to_string()))?;
    if let Some(psic) = task.opt("psi") {
        let mut phases = Vec::new();
        for c in psic.array()? {
            phases.push(if c.value.is_null() {
                None
            } else {
                let e = crate::expr::Expr::parse(c.str()?).map_err(|er| c.fail(er.to_string()))?;
                Some(e)
            });
        }
        sol = sol.with_psi(phases).map_err(|e| psic.fail(e.to_string()))?;
    }
    Ok(sol)
}

fn read_points(task: &Cursor, p: usize) -> Result<Vec<Vec<f64>>> {
    let cur = task.get("points")?;
    let mut out = Vec::new();
    for c in cur.array()? {
        let x = c.f64_array()?;
        if x.len() != p {
            return Err(c.fail(format!("expected {} coordinates, got {}", p, x.len())));
        }
        out.push(x);
    }
    if out.is_empty() {
        return Err(cur.fail("points list is empty"));
    }
    Ok(out)
}

fn point_header(p: usize, k: usize, q: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..p).map(|i| format!("x{}", i + 1)).collect();
    h.push("status".into());
    h.push("iterations".into());
    h.push("residual".into());
    h.push("det_phi".into());
    h.push("rank".into());
    h.extend((0..k).map(|i| format!("r{}", i + 1)));
    h.extend((0..q).map(|i| format!("u{}", i + 1)));
    h
}

fn task_implicit_eval(job: &Job, task: &Cursor, rb: &mut ReportBuilder) -> Result<()> {
    let mut keys = IMPLICIT_KEYS.to_vec();
    keys.push("guess");
    task.allow_keys(&keys)?;
    let sol = build_implicit(task)?;
    let points = read_points(task, sol.p)?;
    let guess = match task.opt("guess") {
        Some(c) => Some(c.f64_array()?),
        None => None,
    };
    let header = point_header(sol.p, sol.k, sol.q);
    let href: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    let mut solved = 0usize;
    let mut max_rank = 0usize;
    let mut max_residual = 0.0f64;
    for x in &points {
        let mut row: Vec<String> = x.iter().copied().map(fmt_num).collect();
        match sol.solve_point(x, guess.as_deref()) {
            Ok(ps) => {
                let dec = sol.derivative_matrix(x, &ps.u, &ps.phi)?;
                solved += 1;
                max_rank = max_rank.max(dec.rank);
                max_residual = max_residual.max(ps.residual);
                row.push("ok".into());
                row.push(ps.iterations.to_string());
                row.push(fmt_num(ps.residual));
                row.push(fmt_num(ps.phi.det));
                row.push(dec.rank.to_string());
                row.extend(ps.r.iter().copied().map(fmt_num));
                row.extend(ps.u.iter().copied().map(fmt_num));
            }
            Err(e @ (Error::Catastrophe { .. } | Error::NoConvergence(_))) => {
                rb.fail(format!("point {x:?}: {e}"));
                row.push(match e {
                    Error::Catastrophe { .. } => "catastrophe".into(),
                    _ => "no-convergence".into(),
                });
                while row.len() < header.len() {
                    row.push(String::new());
                }
            }
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    rb.result("points_total", json!(points.len()));
    rb.result("points_solved", json!(solved));
    rb.result("max_rank", json!(max_rank));
    rb.result("max_fixed_point_residual", num(max_residual));
    job.csv(rb, "implicit_points.csv", &href, &rows)?;
    Ok(())
}

fn task_pfaffian_eval(job: &Job, task: &Cursor, rb: &mut ReportBuilder) -> Result<()> {
    let mut keys = IMPLICIT_KEYS.to_vec();
    keys.extend(["r0", "compare", "tol_compare"]);
    task.allow_keys(&keys)?;
    let mut sol = build_implicit(task)?;
    if task.opt("psi").is_none() {
        // Identity phases make the invariant-space solve agree with the
        // direct one; an explicit psi overrides (set compare off for those).
        let phases = (0..sol.k)
            .map(|s| Ok(Some(crate::expr::Expr::parse(&format!("r{}", s + 1))?)))
            .collect::<Result<Vec<_>>>()?;
        sol = sol.with_psi(phases)?;
    }
    let points = read_points(task, sol.p)?;
    let r0 = match task.opt("r0") {
        Some(c) => Some(c.f64_array()?),
        None => None,
    };
    let compare = match task.opt("compare") {
        Some(c) => c.bool()?,
        None => true,
    };
    let tol_compare = opt_f64(task, "tol_compare")?.unwrap_or(1e-10);

    let mut header: Vec<String> = (0..sol.p).map(|i| format!("x{}", i + 1)).collect();
    header.push("status".into());
    header.push("iterations".into());
    header.push("residual".into());
    header.extend((0..sol.k).map(|i| format!("r{}", i + 1)));
    header.extend((0..sol.q).map(|i| format!("u{}", i + 1)));
    let href: Vec<&str> = header.iter().map(|s| s.as_str()).collect();

    let mut rows = Vec::new();
    let mut solved = 0usize;
    let mut max_delta = 0.0f64;
    for x in &points {
        let mut row: Vec<String> = x.iter().copied().map(fmt_num).collect();
        match sol.solve_pfaffian_point(x, r0.as_deref()) {
            Ok(ps) => {
                solved += 1;
                row.push("ok".into());
                row.push(ps.iterations.to_string());
                row.push(fmt_num(ps.residual));
                row.extend(ps.r.iter().copied().map(fmt_num));
                row.extend(ps.u.iter().copied().map(fmt_num));
                if compare {
                    let direct = sol.solve_point(x, None)?;
                    for (a, b) in ps.u.iter().zip(&direct.u) {
                        max_delta = max_delta.max((a - b).abs());
                    }
                }
            }
            Err(e @ (Error::Catastrophe { .. } | Error::NoConvergence(_))) => {
                rb.fail(format!("point {x:?}: {e}"));
                row.push("failed".into());
                while row.len() < header.len() {
                    row.push(String::new());
                }
            }
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    rb.result("points_total", json!(points.len()));
    rb.result("points_solved", json!(solved));
    if compare && solved > 0 {
        rb.gate("cross_method_max_delta", max_delta, tol_compare);
    }
    job.csv(rb, "pfaffian_points.csv", &href, &rows)?;
    Ok(())
}

// --- simulate2w -----------------------------------------------------------

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Elastic => "elastic",
        Verdict::Inelastic => "inelastic",
        Verdict::Ongoing => "ongoing",
        Verdict::NoInteraction => "no-interaction",
    }
}

fn task_simulate2w(job: &Job, task: &Cursor, rb: &mut ReportBuilder) -> Result<()> {
    task.allow_keys(&[
        "command",
        "nu",
        "background",
        "grid",
        "bumps",
        "scheme",
        "t0",
        "t_end",
        "expect",
    ])?;
    let nuc = task.get("nu")?;
    let nus = nuc.str_array()?;
    if nus.len() != 2 {
        return Err(nuc.fail(format!("expected 2 speed expressions, got {}", nus.len())));
    }
    let background = match task.opt("background") {
        Some(c) => {
            let b = c.f64_array()?;
            if b.len() != 2 {
                return Err(c.fail("expected two background values"));
            }
            [b[0], b[1]]
        }
        None => [0.0, 0.0],
    };
    let sys =
        DiagonalSystem::new(nus[0], nus[1], background).map_err(|e| nuc.fail(e.to_string()))?;
    let gc = task.get("grid")?;
    let grid = Grid1d::new(
        gc.get("x0")?.f64()?,
        gc.get("x1")?.f64()?,
        gc.get("n")?.usize()?,
    )
    .map_err(|e| gc.fail(e.to_string()))?;
    let bc = task.get("bumps")?;
    let blist = bc.array()?;
    if blist.len() != 2 {
        return Err(bc.fail(format!("expected one bump per family, got {}", blist.len())));
    }
    let mut bumps = Vec::new();
    for b in &blist {
        b.allow_keys(&["amp", "center", "half_width"])?;
        bumps.push(Bump {
            amp: b.get("amp")?.f64()?,
            center: b.get("center")?.f64()?,
            half_width: b.get("half_width")?.f64()?,
        });
    }
    let t0 = opt_f64(task, "t0")?.unwrap_or(0.0);
    let data = InitialData::from_bumps(grid, t0, background, [bumps[0], bumps[1]]);
    let scheme: Scheme = match task.opt("scheme") {
        Some(c) => c.str()?.parse().map_err(|e: Error| c.fail(e.to_string()))?,
        None => Scheme::Characteristics,
    };
    let t_end = task.get("t_end")?.f64()?;

    let res = waves1d::simulate(&sys, &data, t_end, scheme, job.num.cfl)?;
    let rep = waves1d::elasticity_report(&res);

    rb.result("scheme", json!(format!("{:?}", res.scheme).to_lowercase()));
    rb.result("gap_c", num(res.validation.gap_c));
    rb.result("t_reached", num(res.t_reached));
    rb.result("t1", opt_num(rep.t1));
    rb.result("t2", opt_num(rep.t2));
    rb.result("verdict_elasticity", json!(verdict_str(rep.verdict)));
    rb.result(
        "crossing",
        match &res.crossing {
            Some(c) => json!({ "family": c.family + 1, "t": num(c.t) }),
            None => Value::Null,
        },
    );
    rb.result(
        "range_drift",
        json!([num(res.range_drift[0]), num(res.range_drift[1])]),
    );
    rb.tolerance("match_error", rep.tol);
    rb.result(
        "families",
        json!(rep
            .families
            .iter()
            .map(|f| json!({
                "components_initial": f.components_initial,
                "components_final": f.components_final,
                "shift": num(f.shift),
                "free_flight_shift": num(f.free_flight_shift),
                "interaction_shift": num(f.interaction_shift),
                "match_error": num(f.match_error),
                "shape_compared": f.shape_compared,
            }))
            .collect::<Vec<_>>()),
    );
    if let Some(expect) = task.opt("expect") {
        let want = expect.str()?;
        let got = verdict_str(rep.verdict);
        rb.result("expected_verdict", json!(want));
        if want != got {
            rb.fail(format!("expected verdict '{want}', got '{got}'"));
        }
    }

    if let Some(m) = &res.markers {
        let mut rows = Vec::new();
        for fam in 0..2 {
            for (i, (pos, val)) in m.pos[fam].iter().zip(&m.val[fam]).enumerate() {
                rows.push(vec![
                    (fam + 1).to_string(),
                    i.to_string(),
                    fmt_num(*pos),
                    fmt_num(*val),
                ]);
            }
        }
        job.csv(rb, "markers.csv", &["family", "index", "pos", "value"], &rows)?;
    }
    {
        let mut rows = Vec::new();
        for (t, sup) in &res.support_history {
            let cell = |s: &Option<(f64, f64)>, which: usize| match s {
                Some(ab) => fmt_num(if which == 0 { ab.0 } else { ab.1 }),
                None => String::new(),
            };
            rows.push(vec![
                fmt_num(*t),
                cell(&sup[0], 0),
                cell(&sup[0], 1),
                cell(&sup[1], 0),
                cell(&sup[1], 1),
            ]);
        }
        job.csv(rb, "supports.csv", &["t", "a1", "b1", "a2", "b2"], &rows)?;
    }
    {
        let mut rows = Vec::new();
        for tr in &res.traces {
            for (ti, t) in tr.times.iter().enumerate() {
                for (mi, idx) in tr.indices.iter().enumerate() {
                    rows.push(vec![
                        (tr.family + 1).to_string(),
                        idx.to_string(),
                        fmt_num(*t),
                        fmt_num(tr.positions[ti][mi]),
                        fmt_num(tr.values[mi]),
                    ]);
                }
            }
        }
        job.csv(
            rb,
            "traces.csv",
            &["family", "marker", "t", "pos", "value"],
            &rows,
        )?;
    }
    if job.out.emit_frames {
        let xs = res.initial.grid.xs();
        let mut rows = Vec::new();
        for fr in &res.frames {
            for (i, x) in xs.iter().enumerate() {
                rows.push(vec![
                    fmt_num(fr.t),
                    fmt_num(*x),
                    fmt_num(fr.r1[i]),
                    fmt_num(fr.r2[i]),
                ]);
            }
        }
        job.csv(rb, "frames.csv", &["t", "x", "r1", "r2"], &rows)?;
    }
    Ok(())
}

// --- residual -------------------------------------------------------------

fn task_residual(job: &Job, task: &Cursor, rb: &mut ReportBuilder) -> Result<()> {
    let mut keys = IMPLICIT_KEYS.to_vec();
    keys.extend(["lo", "hi", "tol"]);
    keys.retain(|k| *k != "points");
    task.allow_keys(&keys)?;
    let sys = job.cfg.build_model()?;
    let sol = build_implicit(task)?;
    if sol.p != sys.p() || sol.q != sys.q() {
        return Err(task.fail(format!(
            "solution maps {} -> {} but the model needs {} -> {}",
            sol.p,
            sol.q,
            sys.p(),
            sys.q()
        )));
    }
    let lo = task.get("lo")?.f64_array()?;
    let hi = task.get("hi")?.f64_array()?;
    if lo.len() != sol.p || hi.len() != sol.p {
        return Err(task.fail("lo/hi must have one entry per independent variable"));
    }
    let tol = opt_f64(task, "tol")?.unwrap_or(1e-6);
    let points = tensor_points(&lo, &hi, job.num.per_axis.max(2));
    let q = sol.q;
    let p = sol.p;
    let solver = sol;
    let sampler = StateFn::from_fn(p, q, "solved implicit field", move |x| {
        Ok(solver.solve_point(x, None)?.u)
    });
    let rep = pde_residual(&sys, &sampler, &points, job.num.h)?;
    rb.gate("residual_max", rep.max, tol);
    rb.result("residual_rms", num(rep.rms));
    rb.result("points", json!(points.len()));
    rb.result("h", num(job.num.h));
    if let Some(c) = rep.constraint_max {
        rb.result("constraint_max", num(c));
    }
    let mut header: Vec<String> = (0..p).map(|i| format!("x{}", i + 1)).collect();
    header.push("residual".into());
    let href: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = rep
        .per_point
        .iter()
        .map(|pr| {
            let mut row: Vec<String> = pr.x.iter().copied().map(fmt_num).collect();
            row.push(fmt_num(pr.residual));
            row
        })
        .collect();
    job.csv(rb, "residual_points.csv", &href, &rows)?;
    Ok(())
}

// --- showcase -------------------------------------------------------------

fn showcase_cmd(args: ShowcaseArgs) -> Result<bool> {
    let mut family = args.family.clone();
    let mut psi = args.psi.clone();
    let mut num_cfg = Numerics::default();
    let mut out = OutputConfig::default();
    if let Some(path) = &args.config {
        let cfg = RunConfig::from_path(path)?;
        let command = cfg.command()?;
        if command != "showcase" {
            return Err(cfg
                .task()?
                .get("command")?
                .fail(format!("config is for '{command}', invoked 'showcase'")));
        }
        let task = cfg.task()?;
        task.allow_keys(&["command", "family", "psi"])?;
        if let Some(c) = task.opt("family") {
            if args.family == "all" {
                family = c.str()?.to_string();
            }
        }
        if psi.is_none() {
            if let Some(c) = task.opt("psi") {
                psi = Some(c.str()?.to_string());
            }
        }
        num_cfg = cfg.numerics()?;
        out = cfg.output()?;
    }
    if let Some(d) = args.out {
        out.dir = d;
    }
    let (do_barotropic, do_mhd) = match family.as_str() {
        "barotropic" => (true, false),
        "mhd" => (false, true),
        "all" => (true, true),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown showcase family '{other}' (expected barotropic, mhd or all)"
            )))
        }
    };
    std::fs::create_dir_all(&out.dir)?;
    let mut rb = ReportBuilder::new("showcase");
    let per_axis = num_cfg.per_axis.max(4);
    let h = num_cfg.h;
    if do_barotropic {
        showcase_barotropic(&out, &mut rb, per_axis, h)?;
    }
    if do_mhd {
        let src = psi.as_deref().unwrap_or("0.2*sin(x1)*sin(x2)");
        showcase_mhd(&out, &mut rb, src, per_axis.max(5), h)?;
    }
    finish(&out, rb, "showcase")
}

fn showcase_barotropic(
    out: &OutputConfig,
    rb: &mut ReportBuilder,
    per_axis: usize,
    h: f64,
) -> Result<()> {
    let linear = showcase::barotropic_linear()?;
    let rep = linear.verify((0.0, 1.0), &[-1.0], &[1.0], per_axis, h)?;
    rb.gate("barotropic_linear_residual", rep.residual.max, 1e-6);
    rb.gate("barotropic_linear_mass", rep.mass_identity_max, 1e-8);

    let shear = showcase::barotropic_shear(0.4)?;
    let rep = shear.verify((0.0, 1.0), &[-1.0, -1.0], &[1.0, 1.0], per_axis, h)?;
    rb.gate("barotropic_shear_residual", rep.residual.max, 1e-6);
    rb.gate(
        "barotropic_shear_div_u",
        rep.div_u_max.unwrap_or(f64::NAN),
        5e-8,
    );
    rb.gate("barotropic_shear_mass", rep.mass_identity_max, 1e-8);
    rb.gate(
        "barotropic_shear_symmetry",
        rep.symmetry_max.unwrap_or(f64::NAN),
        1e-8,
    );

    let general = showcase::barotropic_tanh()?;
    let rep = general.verify((0.0, 0.5), &[-1.0, -1.0], &[1.0, 1.0], per_axis, h)?;
    rb.gate("barotropic_general_residual", rep.residual.max, 1e-5);
    rb.gate("barotropic_general_mass", rep.mass_identity_max, 1e-8);

    if out.csv {
        let sampler = general.sampler();
        let mut rows = Vec::new();
        for tx in tensor_points(&[0.0, -1.0, -1.0], &[0.5, 1.0, 1.0], 9) {
            let st = sampler.eval(&tx)?;
            let mut row: Vec<String> = tx.iter().copied().map(fmt_num).collect();
            row.extend(st.iter().copied().map(fmt_num));
            rows.push(row);
        }
        report::write_csv(
            &out.dir.join("barotropic_fields.csv"),
            &["t", "x1", "x2", "u1", "u2", "rho"],
            &rows,
        )?;
        rb.artifact("barotropic_fields.csv");
    }
    Ok(())
}

fn showcase_mhd(
    out: &OutputConfig,
    rb: &mut ReportBuilder,
    psi: &str,
    per_axis: usize,
    h: f64,
) -> Result<()> {
    let sol = alfven_build(psi, 1.0, 1.0, 1.0, 1.0)?;
    rb.result("mhd_psi", json!(psi));
    let rep = alfven_verify(&sol, [-PI, -PI], [PI, PI], per_axis, h)?;
    rb.gate("mhd_residual", rep.pde.max, 1e-6);
    rb.gate("mhd_gauss", rep.div_h_max, 1e-6);
    rb.gate("mhd_h2_variation", rep.h2_variation, 1e-10 * sol.h0 * sol.h0);
    rb.gate_exact("mhd_alignment", rep.alignment_max);
    rb.gate_exact("mhd_stationarity", rep.stationarity_max);
    rb.result("mhd_elements_checked", json!(rep.elements_checked));
    if rep.elements_checked > 0 {
        rb.gate("mhd_element_residual", rep.element_residual_max, 1e-10);
    }
    if out.csv {
        let mut rows = Vec::new();
        let n = 41;
        for i in 0..n {
            for j in 0..n {
                let x1 = -PI + 2.0 * PI * i as f64 / (n - 1) as f64;
                let x2 = -PI + 2.0 * PI * j as f64 / (n - 1) as f64;
                let st = sol.state(x1, x2)?;
                let mut row = vec![fmt_num(x1), fmt_num(x2)];
                row.extend(st.iter().copied().map(fmt_num));
                rows.push(row);
            }
        }
        report::write_csv(
            &out.dir.join("mhd_fields.csv"),
            &[
                "x1", "x2", "rho", "p", "v1", "v2", "v3", "H1", "H2", "H3",
            ],
            &rows,
        )?;
        rb.artifact("mhd_fields.csv");
    }
    Ok(())
}
