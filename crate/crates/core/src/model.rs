//! Quasilinear first-order systems `sum_i A^i(u) du/dx^i = 0` with `p`
//! independent and `q` dependent variables, written through their coefficient
//! matrices `A^i(u)`.
//!
//! Built-ins:
//! * `burgers`: p=2 (t,x), q=1, `A^t=[1]`, `A^x=[u]`.
//! * `barotropic(n)`: inviscid flow with a transported density, p=n+1,
//!   q=n+1, state `(u^1..u^n, rho)`; momentum rows `u^a_t + (u.grad)u^a = 0`
//!   and the continuity row `rho_t + div(rho u) = 0`.
//! * `mhd`: ideal compressible magnetohydrodynamics in Gaussian units, p=4,
//!   q=8, state `(rho, p, v1, v2, v3, H1, H2, H3)`. The magnetic force enters
//!   as `H x curl H / (4 pi)`; the solenoidal condition `div H = 0` is a side
//!   constraint tracked by residual reports, not a row of the square system.
//! * `custom`: all `p*q*q` entries given as expressions in `u1..uq`.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::StateFn;
use nalgebra::DMatrix;
use rand::Rng;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Axis-aligned admissible box for states, with a sampling sub-box used by
/// randomized checks. `contains` treats bounds as open where they encode
/// physical positivity (density, pressure).
#[derive(Debug, Clone)]
pub struct ModelDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
    sample_lo: Vec<f64>,
    sample_hi: Vec<f64>,
}

impl ModelDomain {
    pub fn unbounded(q: usize) -> Self {
        ModelDomain {
            lo: vec![f64::NEG_INFINITY; q],
            hi: vec![f64::INFINITY; q],
            sample_lo: vec![-1.0; q],
            sample_hi: vec![1.0; q],
        }
    }

    pub fn new(lo: Vec<f64>, hi: Vec<f64>, sample_lo: Vec<f64>, sample_hi: Vec<f64>) -> Result<Self> {
        let q = lo.len();
        if hi.len() != q || sample_lo.len() != q || sample_hi.len() != q {
            return Err(Error::dim("domain bound vectors must share one length"));
        }
        for i in 0..q {
            if !(sample_lo[i] <= sample_hi[i]) || !(lo[i] <= sample_lo[i]) || !(sample_hi[i] <= hi[i]) {
                return Err(Error::InvalidParameter(format!(
                    "sampling box must nest inside the domain box (component {})",
                    i + 1
                )));
            }
        }
        Ok(ModelDomain { lo, hi, sample_lo, sample_hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.lo.len()
            && u.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (lo, hi))| v > lo && v < hi || (*lo == f64::NEG_INFINITY && *hi == f64::INFINITY && v.is_finite()))
    }

    /// Uniform sample from the sampling box. Every sample satisfies
    /// `contains`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_lo
            .iter()
            .zip(self.sample_hi.iter())
            .map(|(lo, hi)| if lo == hi { *lo } else { rng.random_range(*lo..*hi) })
            .collect()
    }

    pub fn sample_n<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

#[derive(Debug, Clone)]
enum ModelKind {
    Burgers,
    Barotropic { n: usize },
    Mhd { gamma: f64 },
    Custom { entries: Vec<Vec<Vec<Expr>>> },
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    name: String,
    p: usize,
    q: usize,
    kind: ModelKind,
    domain: ModelDomain,
}

impl SystemModel {
    pub fn burgers() -> SystemModel {
        SystemModel {
            name: "burgers".into(),
            p: 2,
            q: 1,
            kind: ModelKind::Burgers,
            domain: ModelDomain::unbounded(1),
        }
    }

    pub fn barotropic(n: usize) -> Result<SystemModel> {
        if n < 1 {
            return Err(Error::InvalidParameter(format!(
                "barotropic flow needs n >= 1 space dimensions, got {}",
                n
            )));
        }
        let q = n + 1;
        // velocities unrestricted, density positive
        let mut lo = vec![f64::NEG_INFINITY; q];
        lo[n] = 0.0;
        let mut sample_lo = vec![-1.0; q];
        let mut sample_hi = vec![1.0; q];
        sample_lo[n] = 0.5;
        sample_hi[n] = 2.0;
        let domain = ModelDomain::new(lo, vec![f64::INFINITY; q], sample_lo, sample_hi)?;
        Ok(SystemModel {
            name: format!("barotropic({})", n),
            p: n + 1,
            q,
            kind: ModelKind::Barotropic { n },
            domain,
        })
    }

    pub fn mhd(gamma: f64) -> Result<SystemModel> {
        if !(gamma > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "polytropic exponent must exceed 1, got {}",
                gamma
            )));
        }
        let q = 8;
        let mut lo = vec![f64::NEG_INFINITY; q];
        lo[0] = 0.0; // rho > 0
        lo[1] = 0.0; // p > 0
        // Sampling keeps H away from the +-e3 axis so the orthogonal-frame
        // fields used by the Alfven constructions stay well defined.
        let sample_lo = vec![0.5, 0.5, -1.0, -1.0, -1.0, 0.4, 0.4, -0.5];
        let sample_hi = vec![2.0, 2.0, 1.0, 1.0, 1.0, 1.2, 1.2, 0.5];
        let domain = ModelDomain::new(lo, vec![f64::INFINITY; q], sample_lo, sample_hi)?;
        Ok(SystemModel {
            name: "mhd".into(),
            p: 4,
            q,
            kind: ModelKind::Mhd { gamma },
            domain,
        })
    }

    /// A system given entry by entry: `entries[i][r][c]` is `(A^i)_{rc}` as an
    /// expression in `u1..uq`.
    pub fn custom(
        name: impl Into<String>,
        p: usize,
        q: usize,
        entries: Vec<Vec<Vec<Expr>>>,
        domain: Option<ModelDomain>,
    ) -> Result<SystemModel> {
        if p < 1 || q < 1 {
            return Err(Error::InvalidParameter("p and q must be at least 1".into()));
        }
        if entries.len() != p
            || entries
                .iter()
                .any(|m| m.len() != q || m.iter().any(|row| row.len() != q))
        {
            return Err(Error::dim(format!(
                "custom model needs {} matrices of shape {}x{}",
                p, q, q
            )));
        }
        for m in &entries {
            for row in m {
                for e in row {
                    for v in e.free_vars() {
                        let ok = v.strip_prefix('u').is_some_and(|s| {
                            s.parse::<usize>().is_ok_and(|i| i >= 1 && i <= q)
                        });
                        if !ok {
                            return Err(Error::UnboundVariable { name: v });
                        }
                    }
                }
            }
        }
        let domain = domain.unwrap_or_else(|| ModelDomain::unbounded(q));
        if domain.dim() != q {
            return Err(Error::dim("domain dimension must equal q"));
        }
        Ok(SystemModel {
            name: name.into(),
            p,
            q,
            kind: ModelKind::Custom { entries },
            domain,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn domain(&self) -> &ModelDomain {
        &self.domain
    }

    pub fn gamma(&self) -> Option<f64> {
        match self.kind {
            ModelKind::Mhd { gamma } => Some(gamma),
            _ => None,
        }
    }

    /// Names of side constraints that are not rows of the square system but
    /// must hold on solutions (reported by residual checks).
    pub fn side_constraints(&self) -> Vec<&'static str> {
        match self.kind {
            ModelKind::Mhd { .. } => vec!["div_H"],
            _ => vec![],
        }
    }

    /// Coefficient matrix `A^i(u)`, `i = 0..p` (index 0 is time for the
    /// built-ins).
    pub fn matrix(&self, i: usize, u: &[f64]) -> Result<DMatrix<f64>> {
        if i >= self.p {
            return Err(Error::dim(format!(
                "matrix index {} out of range for p = {}",
                i, self.p
            )));
        }
        if u.len() != self.q {
            return Err(Error::dim(format!(
                "state length {} does not match q = {}",
                u.len(),
                self.q
            )));
        }
        match &self.kind {
            ModelKind::Burgers => Ok(if i == 0 {
                DMatrix::from_element(1, 1, 1.0)
            } else {
                DMatrix::from_element(1, 1, u[0])
            }),
            ModelKind::Barotropic { n } => Ok(barotropic_matrix(*n, i, u)),
            ModelKind::Mhd { gamma } => Ok(mhd_matrix(*gamma, i, u)),
            ModelKind::Custom { entries } => {
                let b = crate::expr::Bindings::numbered("u", u);
                let q = self.q;
                let mut m = DMatrix::zeros(q, q);
                for r in 0..q {
                    for c in 0..q {
                        m[(r, c)] = entries[i][r][c].eval(&b)?;
                    }
                }
                Ok(m)
            }
        }
    }

    pub fn matrices(&self, u: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        (0..self.p).map(|i| self.matrix(i, u)).collect()
    }
}

fn barotropic_matrix(n: usize, i: usize, u: &[f64]) -> DMatrix<f64> {
    let q = n + 1;
    let rho = u[n];
    if i == 0 {
        return DMatrix::identity(q, q);
    }
    let j = i - 1; // space direction x_j, 0-based
    let mut m = DMatrix::zeros(q, q);
    for a in 0..n {
        m[(a, a)] = u[j]; // momentum: u^a_t + sum_j u^j u^a_{x_j}
    }
    m[(n, j)] = rho; // continuity: rho u^j_{x_j} ...
    m[(n, n)] = u[j]; // ... + u^j rho_{x_j}
    m
}

/// MHD rows, state (rho, p, v, H): continuity, adiabatic pressure transport,
/// momentum with the Lorentz term, and the induction equation expanded with
/// `div H` dropped (it is the side constraint).
fn mhd_matrix(gamma: f64, i: usize, u: &[f64]) -> DMatrix<f64> {
    const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;
    let q = 8;
    let (rho, p) = (u[0], u[1]);
    let v = [u[2], u[3], u[4]];
    let h = [u[5], u[6], u[7]];
    let mut m = DMatrix::zeros(q, q);
    if i == 0 {
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        for a in 0..3 {
            m[(2 + a, 2 + a)] = rho; // rho dv/dt
            m[(5 + a, 5 + a)] = 1.0;
        }
        return m;
    }
    let j = i - 1;
    // continuity
    m[(0, 0)] = v[j];
    m[(0, 2 + j)] = rho;
    // pressure
    m[(1, 1)] = v[j];
    m[(1, 2 + j)] = gamma * p;
    // momentum: rho (v.grad) v + grad p + H x curl H / 4pi
    for a in 0..3 {
        m[(2 + a, 2 + a)] += rho * v[j];
        for k in 0..3 {
            // (H x curl H)_a with d/dx_j -> coefficient of dH_k/dx_j
            let delta_aj = if a == j { 1.0 } else { 0.0 };
            let delta_ka = if k == a { 1.0 } else { 0.0 };
            m[(2 + a, 5 + k)] += (delta_aj * h[k] - delta_ka * h[j]) / FOUR_PI;
        }
    }
    m[(2 + j, 1)] = 1.0;
    // induction: dH/dt + (v.grad)H + H div v - (H.grad) v = 0
    for a in 0..3 {
        m[(5 + a, 5 + a)] += v[j];
        m[(5 + a, 2 + j)] += h[a];
        m[(5 + a, 2 + a)] -= h[j];
    }
    m
}

/// Looks a model up by name. `n` is required for `barotropic`; `gamma`
/// defaults to 5/3 for `mhd`.
pub fn registry_get(name: &str, n: Option<usize>, gamma: Option<f64>) -> Result<SystemModel> {
    match name {
        "burgers" => Ok(SystemModel::burgers()),
        "barotropic" => {
            let n = n.ok_or_else(|| {
                Error::InvalidParameter("barotropic requires the dimension parameter n".into())
            })?;
            SystemModel::barotropic(n)
        }
        "mhd" => SystemModel::mhd(gamma.unwrap_or(5.0 / 3.0)),
        other => Err(Error::UnknownModel(other.into())),
    }
}

/// Central-difference Jacobian of a state field, step `h` absolute (callers
/// scale with [`crate::numdiff::step_scale`]; the conventional default is
/// `1e-5 * max(1, |u|_inf)`).
pub fn jacobian_u(field: &StateFn, u: &[f64], h: f64) -> Result<DMatrix<f64>> {
    jacobian_u_within(field, u, h, None)
}

/// As [`jacobian_u`] but rejects probe points that leave `domain`.
pub fn jacobian_u_within(
    field: &StateFn,
    u: &[f64],
    h: f64,
    domain: Option<&ModelDomain>,
) -> Result<DMatrix<f64>> {
    let n_in = field.dim_in();
    let n_out = field.dim_out();
    if u.len() != n_in {
        return Err(Error::dim(format!(
            "jacobian state length {} does not match field arity {}",
            u.len(),
            n_in
        )));
    }
    let mut jac = DMatrix::zeros(n_out, n_in);
    let mut probe = u.to_vec();
    for j in 0..n_in {
        let orig = probe[j];
        probe[j] = orig + h;
        if let Some(d) = domain {
            if !d.contains(&probe) {
                return Err(Error::OutsideDomain(format!(
                    "jacobian probe left the domain at component {}",
                    j + 1
                )));
            }
        }
        let fp = field.eval(&probe)?;
        probe[j] = orig - h;
        if let Some(d) = domain {
            if !d.contains(&probe) {
                return Err(Error::OutsideDomain(format!(
                    "jacobian probe left the domain at component {}",
                    j + 1
                )));
            }
        }
        let fm = field.eval(&probe)?;
        probe[j] = orig;
        for r in 0..n_out {
            jac[(r, j)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// The conventional Jacobian step at state `u`.
pub fn default_step(u: &[f64]) -> f64 {
    crate::numdiff::step_scale(DEFAULT_FD_STEP, u)
}
