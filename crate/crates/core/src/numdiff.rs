//! Finite-difference kernels shared by every module that differentiates
//! numerically. All steps are relative: callers pass a base step `h` that is
//! already scaled by `step_scale` (or scale it themselves).

use crate::error::Result;

/// Default relative step rule: `h0 * max(1, |u|_inf)`.
pub fn step_scale(h0: f64, u: &[f64]) -> f64 {
    let m = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    h0 * m.max(1.0)
}

/// Second-order central difference of a scalar function of one variable.
pub fn central<F>(f: F, x: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

/// Fourth-order central difference of a scalar function of one variable.
/// Used where differencing noise from an inner numeric layer must stay far
/// below a later outer difference (stream-function derivatives, expression
/// map Jacobians feeding residual checks).
pub fn central4<F>(f: F, x: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let a = f(x + 2.0 * h)?;
    let b = f(x + h)?;
    let c = f(x - h)?;
    let d = f(x - 2.0 * h)?;
    // paired differences: exactly zero on constant fields, and the
    // correlated part of the rounding error cancels before the big weights
    Ok((8.0 * (b - c) - (a - d)) / (12.0 * h))
}

/// Central second-order partial derivative of a vector-valued function with
/// respect to component `j` of its argument.
pub fn partial<F>(f: F, u: &[f64], j: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut up = u.to_vec();
    let mut um = u.to_vec();
    up[j] += h;
    um[j] -= h;
    let fp = f(&up)?;
    let fm = f(&um)?;
    Ok(fp
        .iter()
        .zip(fm.iter())
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect())
}

/// Fourth-order variant of [`partial`].
pub fn partial4<F>(f: F, u: &[f64], j: usize, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let probe = |delta: f64| -> Result<Vec<f64>> {
        let mut v = u.to_vec();
        v[j] += delta;
        f(&v)
    };
    let a = probe(2.0 * h)?;
    let b = probe(h)?;
    let c = probe(-h)?;
    let d = probe(-2.0 * h)?;
    // same paired-difference form as [`central4`]
    Ok((0..a.len())
        .map(|i| (8.0 * (b[i] - c[i]) - (a[i] - d[i])) / (12.0 * h))
        .collect())
}
