//! Vector-valued functions of a state vector. [`StateFn`] is the common
//! currency for characteristic fields, wave covectors, wave profiles and
//! custom matrix rows: a boxed closure or a vector of parsed expressions,
//! with input/output arities checked at call time.

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use std::fmt;
use std::sync::Arc;

type DynField = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

#[derive(Clone)]
pub struct StateFn {
    dim_in: usize,
    dim_out: usize,
    desc: String,
    f: Arc<DynField>,
}

impl StateFn {
    pub fn from_fn<F>(dim_in: usize, dim_out: usize, desc: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        StateFn {
            dim_in,
            dim_out,
            desc: desc.into(),
            f: Arc::new(f),
        }
    }

    /// Builds a field from expression components. The i-th input component is
    /// bound to `{prefix}{i+1}`, e.g. prefix "u" binds `u1..uN`.
    pub fn from_exprs(dim_in: usize, prefix: &str, exprs: Vec<Expr>) -> Result<Self> {
        let prefix = prefix.to_string();
        // reject variables the binding set will never provide
        for e in &exprs {
            for v in e.free_vars() {
                let ok = v.strip_prefix(&prefix).is_some_and(|suffix| {
                    suffix
                        .parse::<usize>()
                        .is_ok_and(|idx| idx >= 1 && idx <= dim_in)
                });
                if !ok {
                    return Err(Error::UnboundVariable { name: v });
                }
            }
        }
        let desc = format!(
            "[{}]",
            exprs
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        );
        let dim_out = exprs.len();
        let f = move |u: &[f64]| -> Result<Vec<f64>> {
            let b = Bindings::numbered(&prefix, u);
            exprs.iter().map(|e| e.eval(&b)).collect()
        };
        Ok(StateFn {
            dim_in,
            dim_out,
            desc,
            f: Arc::new(f),
        })
    }

    /// Parses each source string and builds the field as in [`from_exprs`].
    pub fn parse(dim_in: usize, prefix: &str, sources: &[&str]) -> Result<Self> {
        let exprs = sources
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_exprs(dim_in, prefix, exprs)
    }

    /// A constant field (ignores its input).
    pub fn constant(dim_in: usize, values: Vec<f64>) -> Self {
        let desc = format!("{:?}", values);
        let dim_out = values.len();
        StateFn::from_fn(dim_in, dim_out, desc, move |_| Ok(values.clone()))
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn desc(&self) -> &str {
        &self.desc
    }

    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.dim_in {
            return Err(Error::dim(format!(
                "field {} expects {} inputs, got {}",
                self.desc,
                self.dim_in,
                u.len()
            )));
        }
        let out = (self.f)(u)?;
        if out.len() != self.dim_out {
            return Err(Error::dim(format!(
                "field {} produced {} outputs, expected {}",
                self.desc,
                out.len(),
                self.dim_out
            )));
        }
        Ok(out)
    }
}

impl fmt::Debug for StateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "StateFn({} -> {}, {})",
            self.dim_in, self.dim_out, self.desc
        )
    }
}
