//! Rank-one wave algebra: wave covectors `lambda(u)`, characteristic vectors
//! `gamma(u)` with `(lambda_i A^i) gamma = 0`, kernels and eigenstructure of
//! directional coefficient matrices, and the first-order symmetry fields
//! annihilated by a covector family.

use crate::error::{Error, Result};
use crate::field::StateFn;
use crate::model::SystemModel;
use nalgebra::{DMatrix, DVector};

/// Relative threshold separating numerically-zero singular values.
pub const TOL_RANK: f64 = 1e-10;
/// Condition-number ceiling for invertible covector submatrices.
pub const MAX_LAMBDA_COND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    /// Divide by the first component; errors where it vanishes.
    FirstComponentOne,
}

/// A covector field `u -> lambda(u)` in the dual of the independent-variable
/// space (length p).
#[derive(Debug, Clone)]
pub struct WaveCovector {
    func: StateFn,
    normalization: Normalization,
}

impl WaveCovector {
    pub fn new(func: StateFn) -> Self {
        WaveCovector {
            func,
            normalization: Normalization::Raw,
        }
    }

    pub fn normalized(func: StateFn) -> Self {
        WaveCovector {
            func,
            normalization: Normalization::FirstComponentOne,
        }
    }

    pub fn constant(dim_in: usize, values: Vec<f64>) -> Self {
        WaveCovector::new(StateFn::constant(dim_in, values))
    }

    pub fn p(&self) -> usize {
        self.func.dim_out()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn desc(&self) -> &str {
        self.func.desc()
    }

    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let v = self.func.eval(u)?;
        match self.normalization {
            Normalization::Raw => Ok(v),
            Normalization::FirstComponentOne => {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if v[0].abs() <= 1e-12 * norm.max(1e-300) {
                    return Err(Error::domain(format!(
                        "covector normalization failed: first component {:.3e} of {}",
                        v[0],
                        self.func.desc()
                    )));
                }
                Ok(v.iter().map(|x| x / v[0]).collect())
            }
        }
    }

    /// Plain closure over the unnormalized field (for Jacobians).
    pub fn raw(&self) -> &StateFn {
        &self.func
    }
}

/// A simple element: a characteristic vector field paired with its wave
/// covector. The defining relation `(lambda_i(u) A^i(u)) gamma(u) = 0` is
/// checked by [`SimpleElement::wave_residual`].
#[derive(Debug, Clone)]
pub struct SimpleElement {
    pub gamma: StateFn,
    pub lambda: WaveCovector,
}

impl SimpleElement {
    pub fn new(gamma: StateFn, lambda: WaveCovector) -> Self {
        SimpleElement { gamma, lambda }
    }

    /// `|(lambda_i A^i) gamma|_2` at `u`, together with the natural scale
    /// `1 + |A|` it should be compared against.
    pub fn wave_residual(&self, model: &SystemModel, u: &[f64]) -> Result<(f64, f64)> {
        let m = directional_matrix(model, &self.lambda, u)?;
        let g = DVector::from_vec(self.gamma.eval(u)?);
        let scale = 1.0
            + (0..model.p())
                .map(|i| model.matrix(i, u).map(|a| a.norm()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(0.0f64, f64::max);
        Ok(((&m * g).norm(), scale))
    }
}

/// `sum_i lambda_i(u) A^i(u)`. Errors if the covector vanishes at `u`.
pub fn directional_matrix(
    model: &SystemModel,
    lambda: &WaveCovector,
    u: &[f64],
) -> Result<DMatrix<f64>> {
    let lam = lambda.eval(u)?;
    if lam.len() != model.p() {
        return Err(Error::dim(format!(
            "covector length {} does not match p = {}",
            lam.len(),
            model.p()
        )));
    }
    if lam.iter().all(|v| *v == 0.0) {
        return Err(Error::domain(
            "wave covector vanishes at the requested state",
        ));
    }
    let q = model.q();
    let mut out = DMatrix::zeros(q, q);
    for (i, li) in lam.iter().enumerate() {
        if *li != 0.0 {
            out += model.matrix(i, u)? * *li;
        }
    }
    Ok(out)
}

/// Orthonormal basis of the null space of `m`, via SVD. Directions with
/// singular value at most `tol_rank * sigma_max` count as null. Each basis
/// vector is normalized so its first component larger than `1e-12` in
/// magnitude is positive.
pub fn kernel(m: &DMatrix<f64>, tol_rank: f64) -> Vec<Vec<f64>> {
    let n = m.ncols();
    let svd = m.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(0.0f64, |a, s| a.max(*s));
    if smax == 0.0 {
        // zero matrix: the whole space, canonical basis
        return (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    let vt = svd.v_t.expect("svd with v_t requested");
    let mut out = Vec::new();
    for (i, s) in sigma.iter().enumerate() {
        if *s <= tol_rank * smax {
            let mut v: Vec<f64> = vt.row(i).iter().copied().collect();
            fix_sign(&mut v);
            out.push(v);
        }
    }
    // rows with sigma below tolerance always trail in the ordered SVD, but
    // keep the basis order deterministic regardless
    out
}

fn fix_sign(v: &mut [f64]) {
    for x in v.iter() {
        if x.abs() > 1e-12 {
            if *x < 0.0 {
                v.iter_mut().for_each(|y| *y = -*y);
            }
            return;
        }
    }
}

/// Singular values of `m` in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub alpha: f64,
    /// `(-alpha, 1)`: the covector of the travelling wave `r = x - alpha t`.
    pub lambda: Vec<f64>,
    pub gammas: Vec<Vec<f64>>,
    pub algebraic: usize,
    pub geometric: usize,
}

impl EigenPair {
    pub fn defective(&self) -> bool {
        self.geometric < self.algebraic
    }
}

#[derive(Debug, Clone)]
pub struct EigenWaves {
    pub pairs: Vec<EigenPair>,
    /// True when the eigenvectors fail to span the state space.
    pub defective: bool,
}

/// Real eigenstructure of the evolution matrix `(A^t)^-1 A^x` of a p=2
/// system `u_t + A u_x = 0`, at state `u`. Eigenvalues are the wave speeds;
/// each pair carries the covector `(-alpha, 1)` and the eigendirections.
/// Complex eigenvalues are a hyperbolicity violation and error out.
pub fn eigen_wave_vectors(model: &SystemModel, u: &[f64]) -> Result<EigenWaves> {
    if model.p() != 2 {
        return Err(Error::dim(format!(
            "eigen wave analysis needs p = 2 (one time, one space), got p = {}",
            model.p()
        )));
    }
    let at = model.matrix(0, u)?;
    let ax = model.matrix(1, u)?;
    let lu = at.clone().lu();
    let a = lu.solve(&ax).ok_or_else(|| {
        Error::domain("time coefficient matrix is singular at the state")
    })?;
    let scale = 1.0 + a.norm();
    let eigs = a.complex_eigenvalues();

    let mut complex = Vec::new();
    let mut reals: Vec<f64> = Vec::new();
    for e in eigs.iter() {
        if e.im.abs() > 1e-10 * scale {
            complex.push(*e);
        } else {
            reals.push(e.re);
        }
    }
    if !complex.is_empty() {
        return Err(Error::Hyperbolicity(
            complex
                .iter()
                .map(|c| format!("{:.6e}{:+.6e}i", c.re, c.im))
                .collect::<Vec<_>>()
                .join(", "),
        ));
    }
    reals.sort_by(|x, y| x.partial_cmp(y).unwrap());

    // cluster eigenvalues closer than the rounding floor of a defective pair
    let tol_cluster = 1e-8 * scale;
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < reals.len() {
        let mut j = i + 1;
        while j < reals.len() && reals[j] - reals[j - 1] <= tol_cluster {
            j += 1;
        }
        let cluster = &reals[i..j];
        let alpha = cluster.iter().sum::<f64>() / cluster.len() as f64;
        let shifted = &a - DMatrix::identity(a.nrows(), a.ncols()) * alpha;
        // alpha carries eigenvalue rounding (~sqrt(eps) when defective), so
        // the kernel cut is looser here than TOL_RANK
        let gammas = kernel(&shifted, 1e-6);
        pairs.push(EigenPair {
            alpha,
            lambda: vec![-alpha, 1.0],
            geometric: gammas.len(),
            gammas,
            algebraic: cluster.len(),
        });
        i = j;
    }
    let defective = pairs.iter().any(|p| p.defective());
    Ok(EigenWaves { pairs, defective })
}

/// The Riemann invariant `r = lambda_i(u) x^i`.
pub fn riemann_invariant(lambda: &WaveCovector, x: &[f64], u: &[f64]) -> Result<f64> {
    let lam = lambda.eval(u)?;
    if lam.len() != x.len() {
        return Err(Error::dim(format!(
            "covector length {} does not match point length {}",
            lam.len(),
            x.len()
        )));
    }
    Ok(lam.iter().zip(x.iter()).map(|(l, xi)| l * xi).sum())
}

/// A vector field on the independent variables annihilated by every covector
/// of a family: `lambda^j_i xi^i = 0`.
#[derive(Debug, Clone)]
pub struct SymmetryField {
    /// The grid coordinate this field is transversal to (unit component).
    pub coord: usize,
    pub xi: StateFn,
}

#[derive(Debug, Clone)]
pub struct SymmetryBasis {
    pub fields: Vec<SymmetryField>,
    /// Independent-variable rows selected for the invertible k x k submatrix.
    pub pivot_rows: Vec<usize>,
    pub cond: f64,
}

/// Builds the `p - k` symmetry fields of a covector family at `u`. A field
/// for coordinate `a` has `xi^a = 1`, zero on the other non-pivot
/// coordinates, and pivot components solved from `lambda^j . xi = 0`. The
/// pivot rows are chosen at `u` (leading rows preferred, otherwise the
/// best-conditioned k-subset) and frozen into the returned fields.
pub fn symmetry_fields(lambdas: &[WaveCovector], u: &[f64]) -> Result<SymmetryBasis> {
    let k = lambdas.len();
    if k == 0 {
        return Err(Error::dim("empty covector family"));
    }
    let p = lambdas[0].p();
    if k > p {
        return Err(Error::dim(format!("family size {} exceeds p = {}", k, p)));
    }
    let l = eval_family(lambdas, u)?; // k rows of length p

    let mut best: Option<(Vec<usize>, f64)> = None;
    for rows in k_subsets(p, k) {
        let m = submatrix(&l, &rows);
        let sv = singular_values(&m);
        let (smax, smin) = (sv[0], sv[sv.len() - 1]);
        if smin <= 0.0 {
            continue;
        }
        let cond = smax / smin;
        if cond >= MAX_LAMBDA_COND {
            continue;
        }
        let leading = rows.iter().copied().eq(0..k);
        match &best {
            // the leading subset wins whenever it qualifies at all
            _ if leading => {
                best = Some((rows, cond));
                break;
            }
            None => best = Some((rows, cond)),
            Some((_, c)) if cond < *c => best = Some((rows, cond)),
            _ => {}
        }
    }
    let (pivot_rows, cond) = best.ok_or_else(|| {
        Error::SingularLambda(format!(
            "no {}x{} covector submatrix has condition below {:.0e}",
            k, k, MAX_LAMBDA_COND
        ))
    })?;

    let mut fields = Vec::new();
    for a in 0..p {
        if pivot_rows.contains(&a) {
            continue;
        }
        let rows = pivot_rows.clone();
        let lams: Vec<WaveCovector> = lambdas.to_vec();
        let q_in = lambdas[0].raw().dim_in();
        let desc = format!("symmetry field (coordinate {})", a + 1);
        let xi = StateFn::from_fn(q_in, p, desc, move |uu: &[f64]| {
            let l = eval_family(&lams, uu)?;
            let m = submatrix(&l, &rows);
            let c = DVector::from_iterator(rows.len(), l.iter().map(|row| row[a]));
            let w = m.lu().solve(&(-c)).ok_or_else(|| {
                Error::SingularLambda("pivot submatrix singular at evaluation state".into())
            })?;
            let mut xi = vec![0.0; l[0].len()];
            xi[a] = 1.0;
            for (m_idx, row) in rows.iter().enumerate() {
                xi[*row] = w[m_idx];
            }
            Ok(xi)
        });
        fields.push(SymmetryField { coord: a, xi });
    }
    Ok(SymmetryBasis {
        fields,
        pivot_rows,
        cond,
    })
}

fn eval_family(lambdas: &[WaveCovector], u: &[f64]) -> Result<Vec<Vec<f64>>> {
    let p = lambdas[0].p();
    let mut rows = Vec::with_capacity(lambdas.len());
    for lam in lambdas {
        if lam.p() != p {
            return Err(Error::dim("covector family has mixed lengths"));
        }
        rows.push(lam.eval(u)?);
    }
    Ok(rows)
}

/// `m[j][i] = lambda^j_{rows[i]}`: the family restricted to selected rows.
fn submatrix(l: &[Vec<f64>], rows: &[usize]) -> DMatrix<f64> {
    let k = l.len();
    DMatrix::from_fn(k, rows.len(), |j, i| l[j][rows[i]])
}

fn k_subsets(p: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, p: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..p {
            cur.push(i);
            rec(i + 1, p, k, cur, out);
            cur.pop();
        }
    }
    rec(0, p, k, &mut cur, &mut out);
    out
}

/// The travelling-wave element of the scalar advection system: `gamma = (1)`,
/// `lambda = (-u, 1)`.
pub fn burgers_element() -> SimpleElement {
    let gamma = StateFn::constant(1, vec![1.0]);
    let lambda = WaveCovector::new(StateFn::from_fn(1, 2, "(-u, 1)", |u: &[f64]| {
        Ok(vec![-u[0], 1.0])
    }));
    SimpleElement::new(gamma, lambda)
}

/// The n entropic-type elements of `barotropic(n)`: `lambda^j = (-u^j, e_j)`
/// with the density direction as characteristic vector.
pub fn barotropic_elements(n: usize) -> Vec<SimpleElement> {
    let q = n + 1;
    let p = n + 1;
    (0..n)
        .map(|j| {
            let mut g = vec![0.0; q];
            g[n] = 1.0;
            let gamma = StateFn::constant(q, g);
            let lambda = WaveCovector::new(StateFn::from_fn(
                q,
                p,
                format!("(-u{}, e{})", j + 1, j + 1),
                move |u: &[f64]| {
                    let mut lam = vec![0.0; p];
                    lam[0] = -u[j];
                    lam[1 + j] = 1.0;
                    Ok(lam)
                },
            ));
            SimpleElement::new(gamma, lambda)
        })
        .collect()
}
