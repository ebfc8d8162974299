//! Classical one-step integration of autonomous ODE systems `dy/ds = f(y)`.
//! Used for flowing characteristic fields across leaf and surface grids.
//! Steps are fourth order; the adaptive driver halves a step whenever the
//! two-half-steps comparison exceeds the caller's local error budget.

use crate::error::{Error, Result};

pub type OdeFn<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

pub fn rk4_step(f: &OdeFn, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = y.len();
    let k1 = f(y)?;
    let mut tmp = vec![0.0; n];
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    let k2 = f(&tmp)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    let k3 = f(&tmp)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    let k4 = f(&tmp)?;
    Ok((0..n)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// One macro step of size `h` with recursive halving: the result of two half
/// steps is accepted once it agrees with the full step within `tol`
/// (max-norm), otherwise each half is refined in turn.
pub fn rk4_step_adaptive(f: &OdeFn, y: &[f64], h: f64, tol: f64) -> Result<Vec<f64>> {
    fn rec(f: &OdeFn, y: &[f64], h: f64, tol: f64, depth: u32) -> Result<Vec<f64>> {
        let full = rk4_step(f, y, h)?;
        let mid = rk4_step(f, y, 0.5 * h)?;
        let two = rk4_step(f, &mid, 0.5 * h)?;
        let err = full
            .iter()
            .zip(two.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if err <= tol || depth >= 16 {
            if depth >= 16 && err > tol {
                return Err(Error::NoConvergence(format!(
                    "flow step error {:.3e} still above {:.3e} after 16 halvings",
                    err, tol
                )));
            }
            return Ok(two);
        }
        let left = rec(f, y, 0.5 * h, tol, depth + 1)?;
        rec(f, &left, 0.5 * h, tol, depth + 1)
    }
    rec(f, y, h, tol, 0)
}

/// Integrates from `y0` over a signed flow time `length`, splitting into
/// macro steps of magnitude at most `h0`.
pub fn integrate(f: &OdeFn, y0: &[f64], length: f64, h0: f64, tol: f64) -> Result<Vec<f64>> {
    if length == 0.0 {
        return Ok(y0.to_vec());
    }
    let nsteps = (length.abs() / h0).ceil().max(1.0) as usize;
    let h = length / nsteps as f64;
    let mut y = y0.to_vec();
    for _ in 0..nsteps {
        y = rk4_step_adaptive(f, &y, h, tol)?;
    }
    Ok(y)
}
