//! Shared error type. Every fallible operation in the crate funnels into
//! [`Error`] so the CLI can map outcomes onto its exit-code contract.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Expression text could not be parsed. `offset` is a byte offset into
    /// the source string pointing at the offending token.
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },

    #[error("unknown function '{name}' at offset {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("unbound variable '{name}'")]
    UnboundVariable { name: String },

    /// Evaluation produced a non-real value (division by zero, sqrt of a
    /// negative number, overflow to infinity, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A state or probe point left the model's admissible box.
    #[error("state outside model domain: {0}")]
    OutsideDomain(String),

    /// Eigenvalue analysis found complex characteristic speeds.
    #[error("hyperbolicity violation: complex eigenvalues {0}")]
    Hyperbolicity(String),

    /// No well-conditioned k-by-k submatrix of the covector matrix exists.
    #[error("singular invariant submatrix: {0}")]
    SingularLambda(String),

    /// Two characteristic fields became (numerically) parallel.
    #[error("degenerate pair: {0}")]
    DegeneratePair(String),

    /// The commutator of a field pair left the span of the pair.
    #[error("span condition violated: {0}")]
    SpanCondition(String),

    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),

    /// |det phi| dropped below the catastrophe threshold; the derivative
    /// decomposition blows up here.
    #[error("gradient catastrophe: |det phi| = {det:.3e} at {context}")]
    Catastrophe { det: f64, context: String },

    #[error("surface integration is path-dependent: residual {residual:.3e} at node {node:?}")]
    PathDependent { residual: f64, node: Vec<usize> },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid initial data: {0}")]
    InitialData(String),

    #[error("CFL violation: {0}")]
    Cfl(String),

    /// Characteristics of one family crossed; the hyperbolic evolution is no
    /// longer single-valued (incipient gradient catastrophe).
    #[error("characteristic crossing in family {family} near t = {t:.6}")]
    CharacteristicCrossing { family: usize, t: f64 },

    /// Config file violated the schema. `pointer` is a JSON pointer.
    #[error("config error at {pointer}: {msg}")]
    Config { pointer: String, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
