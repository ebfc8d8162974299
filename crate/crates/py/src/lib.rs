//! Python bindings. Thin wrappers: expressions come in as strings, results
//! go out as dicts and plain lists, and every library error surfaces as
//! ValueError (bad input) or RuntimeError (numerical breakdown).

use kwave::field::StateFn;
use kwave::implicit::{self, ImplicitSolution, ProfileMap};
use kwave::involution::{self, AbelianizeOptions, LeafGrid};
use kwave::model::{registry_get, SystemModel};
use kwave::showcase::{self, AlfvenSolution, BarotropicSolution, BarotropicVariant};
use kwave::surface::{integrate_surface, GridAxes, SurfaceMap, SurfaceOptions};
use kwave::wavealg::{self, SimpleElement, WaveCovector};
use kwave::waves1d::{self, Bump, DiagonalSystem, Grid1d, InitialData, Verdict};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn perr(e: kwave::Error) -> PyErr {
    use kwave::Error::*;
    match e {
        Catastrophe { .. } | NoConvergence(_) | PathDependent { .. } | Hyperbolicity(_)
        | CharacteristicCrossing { .. } | Cfl(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_state_fn(srcs: &[String], dim_in: usize, var: &str) -> PyResult<StateFn> {
    let refs: Vec<&str> = srcs.iter().map(|s| s.as_str()).collect();
    StateFn::parse(dim_in, var, &refs).map_err(perr)
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().copied().collect())
        .collect()
}

/// A quasilinear system from the built-in registry.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Model {
    inner: SystemModel,
}

#[pymethods]
impl Model {
    /// Model("burgers"), Model("barotropic", n=2), Model("mhd", gamma=1.667)
    #[new]
    #[pyo3(signature = (name, n=None, gamma=None))]
    fn new(name: &str, n: Option<usize>, gamma: Option<f64>) -> PyResult<Self> {
        Ok(Model {
            inner: registry_get(name, n, gamma).map_err(perr)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    /// Coefficient matrix A^i(u) as nested lists.
    fn matrix(&self, i: usize, u: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.matrix(i, &u).map_err(perr)?))
    }

    /// Reproducible states from the model's admissible box.
    #[pyo3(signature = (count, seed=0))]
    fn sample_states(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.inner.domain().sample_n(&mut rng, count)
    }
}

/// A characteristic pair (gamma, lambda), both given as expression lists in
/// the state variables u1..uq.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Element {
    inner: SimpleElement,
}

#[pymethods]
impl Element {
    #[new]
    #[pyo3(signature = (gamma, lambda, normalized=false))]
    fn new(gamma: Vec<String>, lambda: Vec<String>, normalized: bool) -> PyResult<Self> {
        let q = gamma.len();
        let g = parse_state_fn(&gamma, q, "u")?;
        let l = parse_state_fn(&lambda, q, "u")?;
        let lam = if normalized {
            WaveCovector::normalized(l)
        } else {
            WaveCovector::new(l)
        };
        Ok(Element {
            inner: SimpleElement::new(g, lam),
        })
    }

    #[staticmethod]
    fn burgers() -> Self {
        Element {
            inner: wavealg::burgers_element(),
        }
    }

    #[staticmethod]
    fn barotropic(n: usize) -> Vec<Element> {
        wavealg::barotropic_elements(n)
            .into_iter()
            .map(|inner| Element { inner })
            .collect()
    }

    /// Alfven element for polarization eps with amplitude axis a and
    /// background direction b.
    #[staticmethod]
    fn alfven(eps: f64, a: [f64; 3], b: [f64; 3]) -> Self {
        Element {
            inner: showcase::alfven_element(eps, a, b),
        }
    }

    fn gamma(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.gamma.eval(&u).map_err(perr)
    }

    fn lambda(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.lambda.eval(&u).map_err(perr)
    }

    /// (|lambda_i A^i gamma|, scale): the defining relation's residual and
    /// the 1 + max norm it should be judged against.
    fn wave_residual(&self, model: &Model, u: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.wave_residual(&model.inner, &u).map_err(perr)
    }
}

/// u = f(r(x, u)) with r^s = lambda^s(u) . x.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Implicit {
    inner: ImplicitSolution,
}

impl Implicit {
    fn build(
        k: usize,
        p: usize,
        profile: Vec<String>,
        lambdas: Vec<Vec<String>>,
        psi: Option<Vec<Option<String>>>,
    ) -> PyResult<ImplicitSolution> {
        let refs: Vec<&str> = profile.iter().map(|s| s.as_str()).collect();
        let f = StateFn::parse(k, "r", &refs).map_err(perr)?;
        let q = f.dim_out();
        let mut lams = Vec::new();
        for l in &lambdas {
            if l.len() != p {
                return Err(PyValueError::new_err(format!(
                    "covector needs {} components, got {}",
                    p,
                    l.len()
                )));
            }
            lams.push(WaveCovector::new(parse_state_fn(l, q, "u")?));
        }
        let mut sol = ImplicitSolution::new(
            "python",
            ProfileMap::Closed { f, df: Vec::new() },
            lams,
            p,
        )
        .map_err(perr)?;
        if let Some(phases) = psi {
            let mut exprs = Vec::new();
            for ph in phases {
                exprs.push(match ph {
                    None => None,
                    Some(src) => Some(kwave::expr::Expr::parse(&src).map_err(perr)?),
                });
            }
            sol = sol.with_psi(exprs).map_err(perr)?;
        }
        Ok(sol)
    }
}

#[pymethods]
impl Implicit {
    /// Implicit(k, p, profile, lambdas): profile maps r1..rk to q values,
    /// each covector maps u1..uq to p values. psi (optional) shifts the
    /// invariant-space relations; None components mean zero phase.
    #[new]
    #[pyo3(signature = (k, p, profile, lambdas, psi=None))]
    fn new(
        k: usize,
        p: usize,
        profile: Vec<String>,
        lambdas: Vec<Vec<String>>,
        psi: Option<Vec<Option<String>>>,
    ) -> PyResult<Self> {
        Ok(Implicit {
            inner: Self::build(k, p, profile, lambdas, psi)?,
        })
    }

    /// Scalar wave u = f(x - u t) with profile text in r1.
    #[staticmethod]
    fn burgers(profile: &str) -> PyResult<Self> {
        Ok(Implicit {
            inner: implicit::burgers_wave(profile).map_err(perr)?,
        })
    }

    #[staticmethod]
    fn crossed() -> Self {
        Implicit {
            inner: implicit::crossed_invariants_example(),
        }
    }

    /// The divergence-free shear flow as a two-invariant solution.
    #[staticmethod]
    fn shear(a: f64) -> PyResult<Self> {
        Ok(Implicit {
            inner: showcase::shear_implicit(a).map_err(perr)?,
        })
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q
    }

    /// Resolve the point value; raises RuntimeError at a gradient
    /// catastrophe.
    #[pyo3(signature = (x, guess=None))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        x: Vec<f64>,
        guess: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ps = self.inner.solve_point(&x, guess.as_deref()).map_err(perr)?;
        let d = PyDict::new(py);
        d.set_item("u", ps.u)?;
        d.set_item("r", ps.r)?;
        d.set_item("det_phi", ps.phi.det)?;
        d.set_item("cond_phi", ps.phi.cond)?;
        d.set_item("iterations", ps.iterations)?;
        d.set_item("residual", ps.residual)?;
        Ok(d)
    }

    /// Factorized derivative du/dx = (df/dr) phi^-1 Lambda at x, with its
    /// singular values and numerical rank.
    fn derivative<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let ps = self.inner.solve_point(&x, None).map_err(perr)?;
        let dec = self
            .inner
            .derivative_matrix(&x, &ps.u, &ps.phi)
            .map_err(perr)?;
        let d = PyDict::new(py);
        d.set_item("du_dx", rows(&dec.du_dx))?;
        d.set_item("rank", dec.rank)?;
        d.set_item("singular_values", dec.singular_values)?;
        d.set_item("xi", dec.xi)?;
        d.set_item("xi_residual", dec.xi_residual)?;
        Ok(d)
    }

    /// Solve the invariant-space relations lambda(f(r)) . x = psi(r) for r.
    #[pyo3(signature = (x, r0=None))]
    fn solve_pfaffian<'py>(
        &self,
        py: Python<'py>,
        x: Vec<f64>,
        r0: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let ps = self
            .inner
            .solve_pfaffian_point(&x, r0.as_deref())
            .map_err(perr)?;
        let d = PyDict::new(py);
        d.set_item("u", ps.u)?;
        d.set_item("r", ps.r)?;
        d.set_item("iterations", ps.iterations)?;
        d.set_item("residual", ps.residual)?;
        Ok(d)
    }
}

/// Superposed straight-line flows u = f(x - u t), rho from the label
/// Jacobian.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Barotropic {
    inner: BarotropicSolution,
}

#[pymethods]
impl Barotropic {
    /// f: n velocity expressions in x1..xn, g: density profile. The
    /// nilpotent (divergence-free) variant enforces Df nilpotency and tracks
    /// div u in verify().
    #[new]
    #[pyo3(signature = (f, g, nilpotent=false))]
    fn new(f: Vec<String>, g: String, nilpotent: bool) -> PyResult<Self> {
        let n = f.len();
        let fan = parse_state_fn(&f, n, "x")?;
        let gan = parse_state_fn(&[g], n, "x")?;
        let variant = if nilpotent {
            BarotropicVariant::AInvariant
        } else {
            BarotropicVariant::General
        };
        Ok(Barotropic {
            inner: BarotropicSolution::new(fan, gan, variant).map_err(perr)?,
        })
    }

    #[staticmethod]
    fn linear() -> PyResult<Self> {
        Ok(Barotropic {
            inner: showcase::barotropic_linear().map_err(perr)?,
        })
    }

    #[staticmethod]
    fn shear(a: f64) -> PyResult<Self> {
        Ok(Barotropic {
            inner: showcase::barotropic_shear(a).map_err(perr)?,
        })
    }

    #[staticmethod]
    fn tanh_flow() -> PyResult<Self> {
        Ok(Barotropic {
            inner: showcase::barotropic_tanh().map_err(perr)?,
        })
    }

    fn eval<'py>(&self, py: Python<'py>, t: f64, x: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let pt = self.inner.eval(t, &x).map_err(perr)?;
        let d = PyDict::new(py);
        d.set_item("u", pt.u)?;
        d.set_item("rho", pt.rho)?;
        d.set_item("label", pt.label)?;
        d.set_item("det", pt.det)?;
        d.set_item("iterations", pt.iterations)?;
        Ok(d)
    }

    /// Residual sweep over [t0, t1] x box; divergence and label-frame
    /// symmetry are reported for the nilpotent variant.
    #[pyo3(signature = (t0, t1, x_lo, x_hi, per_axis=5, h=1e-4))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        t0: f64,
        t1: f64,
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        per_axis: usize,
        h: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let rep = self
            .inner
            .verify((t0, t1), &x_lo, &x_hi, per_axis, h)
            .map_err(perr)?;
        let d = PyDict::new(py);
        d.set_item("residual_max", rep.residual.max)?;
        d.set_item("residual_rms", rep.residual.rms)?;
        d.set_item("div_u_max", rep.div_u_max)?;
        d.set_item("mass_identity_max", rep.mass_identity_max)?;
        d.set_item("symmetry_max", rep.symmetry_max)?;
        d.set_item("points", rep.points)?;
        Ok(d)
    }
}

/// Stationary double Alfven wave from a bounded stream function.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Alfven {
    inner: AlfvenSolution,
}

#[pymethods]
impl Alfven {
    #[new]
    #[pyo3(signature = (psi, h0=1.0, rho0=1.0, p0=1.0, eps=1.0))]
    fn new(psi: &str, h0: f64, rho0: f64, p0: f64, eps: f64) -> PyResult<Self> {
        Ok(Alfven {
            inner: showcase::alfven_build(psi, h0, rho0, p0, eps).map_err(perr)?,
        })
    }

    /// Unit field direction m, magnetic field H and velocity v at a phase
    /// point.
    fn field<'py>(&self, py: Python<'py>, x1: f64, x2: f64) -> PyResult<Bound<'py, PyDict>> {
        let f = self.inner.field(x1, x2).map_err(perr)?;
        let d = PyDict::new(py);
        d.set_item("m", f.m.to_vec())?;
        d.set_item("h", f.h.to_vec())?;
        d.set_item("v", f.v.to_vec())?;
        Ok(d)
    }

    /// Full state (rho, p, v1..v3, H1..H3).
    fn state(&self, x1: f64, x2: f64) -> PyResult<Vec<f64>> {
        self.inner.state(x1, x2).map_err(perr)
    }

    fn implicit(&self) -> PyResult<Implicit> {
        Ok(Implicit {
            inner: self.inner.implicit_solution().map_err(perr)?,
        })
    }

    #[pyo3(signature = (x_lo, x_hi, per_axis=7, h=1e-4))]
    fn verify<'py>(
        &self,
        py: Python<'py>,
        x_lo: [f64; 2],
        x_hi: [f64; 2],
        per_axis: usize,
        h: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let rep = showcase::alfven_verify(&self.inner, x_lo, x_hi, per_axis, h).map_err(perr)?;
        let d = PyDict::new(py);
        d.set_item("residual_max", rep.pde.max)?;
        d.set_item("div_h_max", rep.div_h_max)?;
        d.set_item("h2_variation", rep.h2_variation)?;
        d.set_item("alignment_max", rep.alignment_max)?;
        d.set_item("stationarity_max", rep.stationarity_max)?;
        d.set_item("element_residual_max", rep.element_residual_max)?;
        d.set_item("elements_checked", rep.elements_checked)?;
        Ok(d)
    }
}

/// Wave surface r -> u integrated from commuting characteristic fields.
#[pyclass(frozen)]
struct Surface {
    inner: SurfaceMap,
}

#[pymethods]
impl Surface {
    /// Integrates over [-half, half]^k with n nodes per axis; raises
    /// ValueError when the fields do not commute.
    #[new]
    #[pyo3(signature = (elements, base, half=0.5, n=21, seed=0x5eed))]
    fn new(
        elements: Vec<Element>,
        base: Vec<f64>,
        half: f64,
        n: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let elems: Vec<SimpleElement> = elements.into_iter().map(|e| e.inner).collect();
        let axes = GridAxes::square(elems.len(), -half, half, n).map_err(perr)?;
        let mut opts = SurfaceOptions::default();
        opts.seed = seed;
        Ok(Surface {
            inner: integrate_surface(&elems, &base, axes, &opts).map_err(perr)?,
        })
    }

    #[getter]
    fn valid_nodes(&self) -> usize {
        self.inner.valid_count()
    }

    #[getter]
    fn total_nodes(&self) -> usize {
        self.inner.axes().node_count()
    }

    #[getter]
    fn audit_residual(&self) -> f64 {
        self.inner.audit.max_residual
    }

    /// Interpolated state at surface coordinates r.
    fn eval(&self, r: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval(&r).map_err(perr)
    }

    fn derivative(&self, r: Vec<f64>, axis: usize) -> PyResult<Vec<f64>> {
        self.inner.derivative(&r, axis).map_err(perr)
    }
}

/// Bracket and span diagnostics for a family of elements at given states.
#[pyfunction]
#[pyo3(signature = (elements, states, tol=1e-8))]
fn check_involutivity<'py>(
    py: Python<'py>,
    elements: Vec<Element>,
    states: Vec<Vec<f64>>,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let elems: Vec<SimpleElement> = elements.into_iter().map(|e| e.inner).collect();
    let span = involution::check_span_condition(&elems, &states, tol).map_err(perr)?;
    let abel = involution::check_abelian(&elems, &states, tol).map_err(perr)?;
    let d = PyDict::new(py);
    d.set_item("in_span", span.iter().all(|s| s.in_span))?;
    d.set_item(
        "max_span_residual",
        span.iter().map(|s| s.max_residual).fold(0.0f64, f64::max),
    )?;
    d.set_item("abelian", abel.abelian)?;
    d.set_item("max_bracket", abel.max_residual)?;
    Ok(d)
}

/// Rescale two span-closed fields (expressions in u1..u{dim}) to commute.
#[pyfunction]
#[pyo3(signature = (gamma1, gamma2, base, half=0.5, n=41))]
fn abelianize<'py>(
    py: Python<'py>,
    gamma1: Vec<String>,
    gamma2: Vec<String>,
    base: Vec<f64>,
    half: f64,
    n: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let dim = base.len();
    let g1 = parse_state_fn(&gamma1, dim, "u")?;
    let g2 = parse_state_fn(&gamma2, dim, "u")?;
    let grid = LeafGrid::symmetric(half, n, half, n).map_err(perr)?;
    let pair = involution::abelianize_pair(&g1, &g2, &base, &grid, &AbelianizeOptions::default())
        .map_err(perr)?;
    let d = PyDict::new(py);
    d.set_item("already_abelian", pair.already_abelian)?;
    d.set_item("truncated", pair.truncated)?;
    d.set_item("max_span_residual", pair.max_span_residual)?;
    d.set_item("max_bracket_residual", pair.max_bracket_residual)?;
    d.set_item("bracket_threshold", pair.bracket_threshold)?;
    d.set_item("verified_samples", pair.verified_samples)?;
    Ok(d)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Elastic => "elastic",
        Verdict::Inelastic => "inelastic",
        Verdict::Ongoing => "ongoing",
        Verdict::NoInteraction => "no-interaction",
    }
}

/// Two-family 1+1D interaction run; bumps are (amp, center, half_width)
/// per family. Returns the elasticity report plus the final frame.
#[pyfunction]
#[pyo3(signature = (nu1, nu2, bumps, t_end, background=(0.0, 0.0), x0=-10.0, x1=10.0,
                    n=1201, scheme="characteristics", cfl=0.9, t0=0.0))]
#[allow(clippy::too_many_arguments)]
fn simulate_two_wave<'py>(
    py: Python<'py>,
    nu1: &str,
    nu2: &str,
    bumps: Vec<(f64, f64, f64)>,
    t_end: f64,
    background: (f64, f64),
    x0: f64,
    x1: f64,
    n: usize,
    scheme: &str,
    cfl: f64,
    t0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    if bumps.len() != 2 {
        return Err(PyValueError::new_err("need exactly one bump per family"));
    }
    let bg = [background.0, background.1];
    let sys = DiagonalSystem::new(nu1, nu2, bg).map_err(perr)?;
    let grid = Grid1d::new(x0, x1, n).map_err(perr)?;
    let bs = [
        Bump { amp: bumps[0].0, center: bumps[0].1, half_width: bumps[0].2 },
        Bump { amp: bumps[1].0, center: bumps[1].1, half_width: bumps[1].2 },
    ];
    let data = InitialData::from_bumps(grid, t0, bg, bs);
    let sch: waves1d::Scheme = scheme.parse().map_err(perr)?;
    let res = waves1d::simulate(&sys, &data, t_end, sch, cfl).map_err(perr)?;
    let rep = waves1d::elasticity_report(&res);

    let d = PyDict::new(py);
    d.set_item("verdict", verdict_name(rep.verdict))?;
    d.set_item("t1", rep.t1)?;
    d.set_item("t2", rep.t2)?;
    d.set_item("gap_c", res.validation.gap_c)?;
    d.set_item("t_reached", res.t_reached)?;
    d.set_item("range_drift", res.range_drift.to_vec())?;
    let fams: Vec<Bound<'py, PyDict>> = rep
        .families
        .iter()
        .map(|f| {
            let fd = PyDict::new(py);
            fd.set_item("components_initial", f.components_initial)?;
            fd.set_item("components_final", f.components_final)?;
            fd.set_item("shift", f.shift)?;
            fd.set_item("free_flight_shift", f.free_flight_shift)?;
            fd.set_item("interaction_shift", f.interaction_shift)?;
            fd.set_item("match_error", f.match_error)?;
            Ok(fd)
        })
        .collect::<PyResult<_>>()?;
    d.set_item("families", fams)?;
    if let Some(last) = res.frames.last() {
        let fd = PyDict::new(py);
        fd.set_item("t", last.t)?;
        fd.set_item("x", res.initial.grid.xs())?;
        fd.set_item("r1", last.r1.clone())?;
        fd.set_item("r2", last.r2.clone())?;
        d.set_item("final_frame", fd)?;
    }
    Ok(d)
}

#[pymodule]
fn kwave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Element>()?;
    m.add_class::<Implicit>()?;
    m.add_class::<Barotropic>()?;
    m.add_class::<Alfven>()?;
    m.add_class::<Surface>()?;
    m.add_function(wrap_pyfunction!(check_involutivity, m)?)?;
    m.add_function(wrap_pyfunction!(abelianize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_two_wave, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
