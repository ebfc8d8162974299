//! Solution-manifold construction: integrate `df/dr^s = γ_s(f)` over a
//! tensor grid of Riemann invariants and interrogate the result through a
//! tensor-product cubic interpolant.
//!
//! Fill order is row-major: the axis-0 line through the base node first, then
//! each further axis swept outwards line by line. For commuting fields the
//! result is path-independent; a seeded random audit re-integrates a fraction
//! of nodes with the axis order reversed and compares.

use crate::error::{Error, Result};
use crate::flow;
use crate::involution;
use crate::model::ModelDomain;
use crate::wavealg::{SimpleElement, WaveCovector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return Err(Error::Grid(format!("bad axis range [{}, {}]", min, max)));
        }
        if n < 2 {
            return Err(Error::Grid("axis needs at least 2 nodes".to_string()));
        }
        Ok(Axis { min, max, n })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }

    /// Index of the node at 0; integrations are anchored there.
    pub fn zero_index(&self) -> Result<usize> {
        if self.min > 0.0 || self.max < 0.0 {
            return Err(Error::Grid(format!(
                "axis [{}, {}] does not contain 0",
                self.min, self.max
            )));
        }
        let i = (-self.min / self.step()).round() as usize;
        let i = i.min(self.n - 1);
        if self.value(i).abs() > 1e-9 * (1.0 + self.step()) {
            return Err(Error::Grid(format!(
                "0 is not a node of axis [{}, {}] with {} nodes",
                self.min, self.max, self.n
            )));
        }
        Ok(i)
    }
}

/// Row-major tensor grid; the last axis is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub axes: Vec<Axis>,
}

impl GridAxes {
    pub fn new(axes: Vec<Axis>) -> Self {
        GridAxes { axes }
    }

    pub fn square(k: usize, min: f64, max: f64, n: usize) -> Result<Self> {
        let ax = Axis::new(min, max, n)?;
        Ok(GridAxes {
            axes: vec![ax; k],
        })
    }

    /// 101 nodes per axis on [−1, 1]².
    pub fn default_surface() -> Self {
        Self::square(2, -1.0, 1.0, 101).expect("static grid is valid")
    }

    pub fn k(&self) -> usize {
        self.axes.len()
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (d, ax) in self.axes.iter().enumerate() {
            f = f * ax.n + idx[d];
        }
        f
    }

    pub fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.k()];
        for d in (0..self.k()).rev() {
            idx[d] = flat % self.axes[d].n;
            flat /= self.axes[d].n;
        }
        idx
    }

    pub fn coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(self.axes.iter())
            .map(|(&i, a)| a.value(i))
            .collect()
    }

    pub fn zero_index(&self) -> Result<Vec<usize>> {
        self.axes.iter().map(|a| a.zero_index()).collect()
    }
}

/// Covector values tabulated over a grid; shares layout with [`SurfaceMap`].
#[derive(Debug, Clone)]
pub struct CovectorTable {
    pub axes: GridAxes,
    pub values: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct PathAudit {
    pub checked: usize,
    pub max_residual: f64,
    pub worst_node: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SurfaceOptions {
    /// Local error budget per node step; steps are halved until under it.
    pub step_tol: f64,
    /// Max allowed row-major vs reversed-order disagreement.
    pub tol_path: f64,
    /// Fraction of valid nodes re-integrated along the reversed axis order.
    pub audit_fraction: f64,
    pub seed: u64,
    /// Verify the fields commute near the base before filling the grid.
    /// Disabling this is how the path-dependence failure mode is exercised.
    pub pre_check: bool,
    pub abelian_tol: f64,
    pub domain: Option<ModelDomain>,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        SurfaceOptions {
            step_tol: 1e-9,
            tol_path: 1e-7,
            audit_fraction: 0.1,
            seed: 0x5eed,
            pre_check: true,
            abelian_tol: 1e-8,
            domain: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceMap {
    axes: GridAxes,
    q: usize,
    base_index: Vec<usize>,
    base_point: Vec<f64>,
    values: Vec<Option<Vec<f64>>>,
    provenance: Vec<String>,
    pub audit: PathAudit,
}

impl SurfaceMap {
    pub fn axes(&self) -> &GridAxes {
        &self.axes
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn base_index(&self) -> &[usize] {
        &self.base_index
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn state_at(&self, idx: &[usize]) -> Option<&Vec<f64>> {
        self.values[self.axes.flat(idx)].as_ref()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn node_states(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.values.iter().filter_map(|v| v.clone())
    }

    /// Raw node storage, row-major; None marks out-of-domain nodes.
    pub fn values(&self) -> &[Option<Vec<f64>>] {
        &self.values
    }

    pub fn eval(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.contract(r, None)
    }

    /// Derivative of the interpolant along one invariant axis.
    pub fn derivative(&self, r: &[f64], axis: usize) -> Result<Vec<f64>> {
        if axis >= self.axes.k() {
            return Err(Error::dim("derivative axis out of range"));
        }
        self.contract(r, Some(axis))
    }

    /// Tensor contraction over the 4^k cubic stencil; `diff` selects which
    /// axis uses derivative weights.
    fn contract(&self, r: &[f64], diff: Option<usize>) -> Result<Vec<f64>> {
        let k = self.axes.k();
        if r.len() != k {
            return Err(Error::dim(format!(
                "expected {} invariant coordinates, got {}",
                k,
                r.len()
            )));
        }
        let mut starts = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        for (d, ax) in self.axes.axes.iter().enumerate() {
            let (s, w) = cubic_weights(ax, r[d], diff == Some(d))?;
            starts.push(s);
            weights.push(w);
        }
        let mut out = vec![0.0; self.q];
        let mut counter = vec![0usize; k];
        let mut idx = vec![0usize; k];
        loop {
            let mut w = 1.0;
            for d in 0..k {
                w *= weights[d][counter[d]];
                idx[d] = starts[d] + counter[d];
            }
            let node = self.values[self.axes.flat(&idx)].as_ref().ok_or_else(|| {
                Error::Grid(format!(
                    "interpolation stencil touches invalid node {:?}",
                    idx
                ))
            })?;
            for (o, v) in out.iter_mut().zip(node.iter()) {
                *o += w * v;
            }
            // Odometer over the 4^k stencil corners.
            let mut d = k;
            loop {
                if d == 0 {
                    return Ok(out);
                }
                d -= 1;
                counter[d] += 1;
                if counter[d] < 4 {
                    break;
                }
                counter[d] = 0;
            }
        }
    }

    /// λ(u) evaluated at every node, one table per covector; normalization
    /// failures surface as errors naming the node.
    pub fn pullback_covectors(&self, lambdas: &[WaveCovector]) -> Result<Vec<CovectorTable>> {
        let mut out = Vec::with_capacity(lambdas.len());
        for lam in lambdas {
            let values: Result<Vec<Option<Vec<f64>>>> = self
                .values
                .iter()
                .enumerate()
                .map(|(flat, v)| match v {
                    None => Ok(None),
                    Some(u) => lam.eval(u).map(Some).map_err(|e| {
                        Error::domain(format!(
                            "covector pullback failed at node {:?}: {}",
                            self.axes.unflat(flat),
                            e
                        ))
                    }),
                })
                .collect();
            out.push(CovectorTable {
                axes: self.axes.clone(),
                values: values?,
            });
        }
        Ok(out)
    }
}

/// 4-point Lagrange weights on a uniform axis; `diff` swaps in the
/// derivative of each basis polynomial.
fn cubic_weights(ax: &Axis, x: f64, diff: bool) -> Result<(usize, [f64; 4])> {
    if ax.n < 4 {
        return Err(Error::Grid(
            "cubic interpolation needs at least 4 nodes per axis".to_string(),
        ));
    }
    let h = ax.step();
    let pad = 1e-12 * (1.0 + h);
    if x < ax.min - pad || x > ax.max + pad {
        return Err(Error::Grid(format!(
            "coordinate {} outside axis [{}, {}]",
            x, ax.min, ax.max
        )));
    }
    let cell = (((x - ax.min) / h).floor() as i64).clamp(0, ax.n as i64 - 2) as usize;
    let start = cell.saturating_sub(1).min(ax.n - 4);
    let p: Vec<f64> = (0..4).map(|m| ax.value(start + m)).collect();
    let mut w = [0.0; 4];
    for m in 0..4 {
        let mut denom = 1.0;
        for j in 0..4 {
            if j != m {
                denom *= p[m] - p[j];
            }
        }
        if diff {
            let mut acc = 0.0;
            for skip in 0..4 {
                if skip == m {
                    continue;
                }
                let mut prod = 1.0;
                for j in 0..4 {
                    if j != m && j != skip {
                        prod *= x - p[j];
                    }
                }
                acc += prod;
            }
            w[m] = acc / denom;
        } else {
            let mut prod = 1.0;
            for j in 0..4 {
                if j != m {
                    prod *= x - p[j];
                }
            }
            w[m] = prod / denom;
        }
    }
    Ok((start, w))
}

fn inside(domain: &Option<ModelDomain>, u: &[f64]) -> bool {
    match domain {
        None => u.iter().all(|x| x.is_finite()),
        Some(d) => u.iter().all(|x| x.is_finite()) && d.contains(u),
    }
}

/// Integrates the element fields over the invariant grid from `base`.
pub fn integrate_surface(
    elements: &[SimpleElement],
    base: &[f64],
    axes: GridAxes,
    opts: &SurfaceOptions,
) -> Result<SurfaceMap> {
    let k = axes.k();
    if k == 0 || elements.len() != k {
        return Err(Error::dim(format!(
            "{} elements for a {}-axis grid",
            elements.len(),
            k
        )));
    }
    let q = base.len();
    for e in elements {
        if e.gamma.dim_in() != q || e.gamma.dim_out() != q {
            return Err(Error::dim("element field does not match the state dimension"));
        }
    }
    if !inside(&opts.domain, base) {
        return Err(Error::OutsideDomain(format!("base point {:?}", base)));
    }
    let base_index = axes.zero_index()?;

    if opts.pre_check && k >= 2 {
        let mut probes = vec![base.to_vec()];
        let mut max_norm = 0.0f64;
        for (d, e) in elements.iter().enumerate() {
            let g = e.gamma.eval(base)?;
            max_norm = max_norm.max(g.iter().map(|x| x * x).sum::<f64>().sqrt());
            let f = |u: &[f64]| e.gamma.eval(u);
            for sign in [1.0, -1.0] {
                let ds = sign * axes.axes[d].step();
                if let Ok(u) = flow::integrate(&f, base, ds, ds.abs(), 1e-10) {
                    probes.push(u);
                }
            }
        }
        let chk = involution::check_abelian(elements, &probes, opts.abelian_tol * (1.0 + max_norm))?;
        if !chk.abelian {
            return Err(Error::SpanCondition(format!(
                "fields do not commute near the base (bracket {:.3e}); rescale before integrating",
                chk.max_residual
            )));
        }
    }

    let mut values: Vec<Option<Vec<f64>>> = vec![None; axes.node_count()];
    values[axes.flat(&base_index)] = Some(base.to_vec());

    // March one line along `axis` from the seed node; invalid or failing
    // steps invalidate the rest of the line, not the whole surface.
    let march = |seed_idx: &[usize], seed_u: &[f64], axis: usize| -> Vec<(Vec<usize>, Vec<f64>)> {
        let e = &elements[axis];
        let f = |u: &[f64]| e.gamma.eval(u);
        let ax = &axes.axes[axis];
        let mut out = Vec::new();
        for dir in [1i64, -1i64] {
            let mut i = seed_idx[axis] as i64;
            let mut u = seed_u.to_vec();
            loop {
                let next = i + dir;
                if next < 0 || next >= ax.n as i64 {
                    break;
                }
                let ds = ax.value(next as usize) - ax.value(i as usize);
                match flow::integrate(&f, &u, ds, ds.abs(), opts.step_tol) {
                    Ok(v) if inside(&opts.domain, &v) => {
                        u = v;
                        let mut idx = seed_idx.to_vec();
                        idx[axis] = next as usize;
                        out.push((idx, u.clone()));
                        i = next;
                    }
                    _ => break,
                }
            }
        }
        out
    };

    for (idx, u) in march(&base_index, base, 0) {
        let flat = axes.flat(&idx);
        values[flat] = Some(u);
    }
    for axis in 1..k {
        // Seeds: every filled node so far (their `axis`..k-1 indices all sit
        // at the base position by construction).
        let seeds: Vec<(Vec<usize>, Vec<f64>)> = values
            .iter()
            .enumerate()
            .filter_map(|(flat, v)| v.as_ref().map(|u| (axes.unflat(flat), u.clone())))
            .collect();
        let filled: Vec<Vec<(Vec<usize>, Vec<f64>)>> = seeds
            .par_iter()
            .map(|(idx, u)| march(idx, u, axis))
            .collect();
        for line in filled {
            for (idx, u) in line {
                let flat = axes.flat(&idx);
                values[flat] = Some(u);
            }
        }
    }

    // Reversed-order audit on a random sample of valid nodes.
    let mut audit = PathAudit {
        checked: 0,
        max_residual: 0.0,
        worst_node: Vec::new(),
    };
    if k >= 2 && opts.audit_fraction > 0.0 {
        let base_flat = axes.flat(&base_index);
        let mut candidates: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(flat, v)| *flat != base_flat && v.is_some())
            .map(|(flat, _)| flat)
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        candidates.shuffle(&mut rng);
        let take = ((candidates.len() as f64 * opts.audit_fraction).floor() as usize)
            .max(1)
            .min(candidates.len());
        let picked = &candidates[..take];

        let reversed: Vec<(usize, Option<Vec<f64>>)> = picked
            .par_iter()
            .map(|&flat| {
                let idx = axes.unflat(flat);
                let mut u = base.to_vec();
                for axis in (0..k).rev() {
                    let ds = axes.axes[axis].value(idx[axis]) - axes.axes[axis].value(base_index[axis]);
                    let e = &elements[axis];
                    let f = |x: &[f64]| e.gamma.eval(x);
                    match flow::integrate(&f, &u, ds, axes.axes[axis].step(), opts.step_tol) {
                        Ok(v) => u = v,
                        Err(_) => return (flat, None),
                    }
                }
                (flat, Some(u))
            })
            .collect();

        for (flat, alt) in reversed {
            let Some(alt) = alt else { continue };
            let Some(v) = &values[flat] else { continue };
            let res = v
                .iter()
                .zip(alt.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            audit.checked += 1;
            if res > audit.max_residual {
                audit.max_residual = res;
                audit.worst_node = axes.unflat(flat);
            }
            if res > opts.tol_path {
                return Err(Error::PathDependent {
                    residual: res,
                    node: axes.unflat(flat),
                });
            }
        }
    }

    Ok(SurfaceMap {
        axes,
        q,
        base_index,
        base_point: base.to_vec(),
        values,
        provenance: elements.iter().map(|e| e.gamma.desc().to_string()).collect(),
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::StateFn;
    use crate::model::ModelDomain;

    fn element(gamma: StateFn, lam: Vec<f64>) -> SimpleElement {
        let d = gamma.dim_in();
        SimpleElement::new(gamma, WaveCovector::constant(d, lam))
    }

    fn coordinate_pair() -> Vec<SimpleElement> {
        vec![
            element(StateFn::constant(2, vec![1.0, 0.0]), vec![1.0, 0.0]),
            element(StateFn::constant(2, vec![0.0, 1.0]), vec![0.0, 1.0]),
        ]
    }

    fn exponential_pair() -> Vec<SimpleElement> {
        vec![
            element(StateFn::constant(2, vec![1.0, 0.0]), vec![1.0, 0.0]),
            element(
                StateFn::from_fn(2, 2, "(0, u2)", |u| Ok(vec![0.0, u[1]])),
                vec![0.0, 1.0],
            ),
        ]
    }

    #[test]
    fn axis_zero_node() {
        let ax = Axis::new(-0.5, 0.5, 41).unwrap();
        assert_eq!(ax.zero_index().unwrap(), 20);
        assert!(ax.value(20).abs() < 1e-15);
        let ax = Axis::new(0.0, 1.0, 11).unwrap();
        assert_eq!(ax.zero_index().unwrap(), 0);
        let ax = Axis::new(0.1, 1.0, 10).unwrap();
        assert!(ax.zero_index().is_err());
    }

    #[test]
    fn flat_unflat_roundtrip() {
        let axes = GridAxes::new(vec![
            Axis::new(0.0, 1.0, 5).unwrap(),
            Axis::new(0.0, 1.0, 7).unwrap(),
            Axis::new(0.0, 1.0, 3).unwrap(),
        ]);
        for flat in 0..axes.node_count() {
            assert_eq!(axes.flat(&axes.unflat(flat)), flat);
        }
    }

    #[test]
    fn constant_fields_give_identity_chart() {
        let axes = GridAxes::square(2, -1.0, 1.0, 21).unwrap();
        let s = integrate_surface(
            &coordinate_pair(),
            &[0.0, 0.0],
            axes,
            &SurfaceOptions::default(),
        )
        .unwrap();
        for flat in 0..s.axes().node_count() {
            let idx = s.axes().unflat(flat);
            let r = s.axes().coords(&idx);
            let u = s.state_at(&idx).unwrap();
            assert!((u[0] - r[0]).abs() < 1e-12);
            assert!((u[1] - r[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_chart_matches_closed_form() {
        let axes = GridAxes::square(2, 0.0, 1.0, 101).unwrap();
        let s = integrate_surface(
            &exponential_pair(),
            &[0.0, 1.0],
            axes,
            &SurfaceOptions::default(),
        )
        .unwrap();
        let mut max_err = 0.0f64;
        for flat in 0..s.axes().node_count() {
            let idx = s.axes().unflat(flat);
            let r = s.axes().coords(&idx);
            let u = s.state_at(&idx).unwrap();
            max_err = max_err.max((u[0] - r[0]).abs());
            max_err = max_err.max((u[1] - r[1].exp()).abs());
        }
        assert!(max_err <= 1e-8, "max node error {}", max_err);
        assert!(s.audit.checked > 0);
        assert!(s.audit.max_residual <= 1e-7);

        // Off-node interpolation and the interpolant's derivative.
        let u = s.eval(&[0.493, 0.715]).unwrap();
        assert!((u[0] - 0.493).abs() < 1e-8);
        assert!((u[1] - 0.715f64.exp()).abs() < 1e-8);
        let d = s.derivative(&[0.493, 0.715], 1).unwrap();
        assert!(d[0].abs() < 1e-8);
        assert!((d[1] - 0.715f64.exp()).abs() < 1e-5);
    }

    #[test]
    fn one_step_differences_reproduce_the_field() {
        let axes = GridAxes::square(2, 0.0, 1.0, 101).unwrap();
        let s = integrate_surface(
            &exponential_pair(),
            &[0.0, 1.0],
            axes,
            &SurfaceOptions::default(),
        )
        .unwrap();
        let dr = s.axes().axes[1].step();
        let mut max_err = 0.0f64;
        for i in 0..101 {
            for j in 1..100 {
                let lo = s.state_at(&[i, j - 1]).unwrap();
                let hi = s.state_at(&[i, j + 1]).unwrap();
                let mid = s.state_at(&[i, j]).unwrap();
                let fd = (hi[1] - lo[1]) / (2.0 * dr);
                max_err = max_err.max((fd - mid[1]).abs());
            }
        }
        // Central-difference truncation dominates: (Δr²/6)·e ≈ 4.5e−5.
        assert!(max_err < 1e-4, "consistency error {}", max_err);
    }

    #[test]
    fn refinement_is_fourth_order() {
        let err_at = |n: usize| {
            let axes = GridAxes::square(2, 0.0, 1.0, n).unwrap();
            let s = integrate_surface(
                &exponential_pair(),
                &[0.0, 1.0],
                axes,
                &SurfaceOptions::default(),
            )
            .unwrap();
            let mut max_err = 0.0f64;
            for flat in 0..s.axes().node_count() {
                let idx = s.axes().unflat(flat);
                let r = s.axes().coords(&idx);
                let u = s.state_at(&idx).unwrap();
                max_err = max_err.max((u[1] - r[1].exp()).abs());
            }
            max_err
        };
        let coarse = err_at(51);
        let fine = err_at(101);
        assert!(
            coarse / fine >= 8.0,
            "refinement ratio {} (coarse {}, fine {})",
            coarse / fine,
            coarse,
            fine
        );
    }

    #[test]
    fn non_commuting_fields_fail_the_audit() {
        let shear = vec![
            element(StateFn::constant(2, vec![1.0, 0.0]), vec![1.0, 0.0]),
            element(
                StateFn::from_fn(2, 2, "(0, u1)", |u| Ok(vec![0.0, u[0]])),
                vec![0.0, 1.0],
            ),
        ];
        let axes = GridAxes::square(2, 0.0, 1.0, 21).unwrap();

        let pre = integrate_surface(&shear, &[0.5, 0.0], axes.clone(), &SurfaceOptions::default());
        assert!(matches!(pre, Err(Error::SpanCondition(_))), "{:?}", pre);

        let mut opts = SurfaceOptions::default();
        opts.pre_check = false;
        let err = integrate_surface(&shear, &[0.5, 0.0], axes, &opts).unwrap_err();
        match err {
            Error::PathDependent { residual, .. } => assert!(residual > 0.01),
            e => panic!("expected path dependence, got {:?}", e),
        }
    }

    #[test]
    fn out_of_domain_nodes_are_invalid_not_fatal() {
        let axes = GridAxes::square(2, 0.0, 1.0, 41).unwrap();
        let mut opts = SurfaceOptions::default();
        opts.domain = Some(
            ModelDomain::new(
                vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
                vec![f64::INFINITY, 2.0],
                vec![0.0, 1.0],
                vec![1.0, 1.9],
            )
            .unwrap(),
        );
        let s = integrate_surface(&exponential_pair(), &[0.0, 1.0], axes, &opts).unwrap();
        let total = s.axes().node_count();
        let valid = s.valid_count();
        assert!(valid < total, "some nodes must be cut");
        // e^{r2} < 2 ⇔ r2 < ln 2 ≈ 0.6931: nodes up to index 27 survive.
        assert!(s.state_at(&[5, 27]).is_some());
        assert!(s.state_at(&[5, 29]).is_none());
        // Interpolation across the cut fails loudly.
        assert!(matches!(s.eval(&[0.1, 0.75]), Err(Error::Grid(_))));
    }

    #[test]
    fn pullback_composes_with_the_chart() {
        let axes = GridAxes::square(2, 0.0, 1.0, 21).unwrap();
        let s = integrate_surface(
            &coordinate_pair(),
            &[0.0, 0.0],
            axes,
            &SurfaceOptions::default(),
        )
        .unwrap();
        let lam = WaveCovector::new(StateFn::from_fn(2, 2, "(-u1, 1)", |u| {
            Ok(vec![-u[0], 1.0])
        }));
        let tables = s.pullback_covectors(&[lam]).unwrap();
        let t = &tables[0];
        for flat in 0..t.axes.node_count() {
            let idx = t.axes.unflat(flat);
            let r = t.axes.coords(&idx);
            let v = t.values[flat].as_ref().unwrap();
            assert!((v[0] - -r[0]).abs() < 1e-12);
            assert!((v[1] - 1.0).abs() < 1e-12);
        }
    }
}
