//! Construction and verification of multiple-wave solutions of quasilinear
//! first-order systems `A^i(u) du/dx^i = 0`.
//!
//! The crate is organised around a small number of geometric objects:
//! wave covectors and simple elements ([`wavealg`]), involutivity and
//! commutator diagnostics for families of characteristic fields
//! ([`involution`]), numerically integrated wave surfaces ([`surface`]),
//! implicit point solutions `u = f(r(x,u))` together with their factorized
//! derivatives ([`implicit`]), a 1+1 dimensional two-wave simulator
//! ([`waves1d`]), and two worked fluid constructions ([`showcase`]).
//!
//! Model coefficients and user profiles are plain arithmetic expressions
//! ([`expr`]); built-in systems live in [`model`]. The `kwave` binary fronts
//! everything with JSON-configured subcommands ([`cli`]).

pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod implicit;
pub mod involution;
pub mod model;
pub mod numdiff;
pub mod report;
pub mod showcase;
pub mod surface;
pub mod wavealg;
pub mod waves1d;

pub use error::{Error, Result};
