use thiserror::Error;

use crate::qpoint::QPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("oracle cap exceeded: q = {q} > {cap}")]
    OracleCap { q: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ambiguous matching between samples {from} and {to} (margin {margin:e})")]
    AmbiguousMatching { from: usize, to: usize, margin: f64 },

    #[error("path is not irreducible: {0}")]
    NotIrreducible(String),

    #[error("basis construction failed: {0}")]
    Construction(String),

    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<QPoint>,
    },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("not decomposable: {0}")]
    NotDecomposable(String),

    #[error("degenerate frequency profile: H vanishes at every radius")]
    DegenerateProfile,

    #[error("tangent map could not be classified (residual {residual:e})")]
    UnclassifiedTangent { residual: f64 },

    #[error("zero energy in the blow-up ball")]
    ZeroEnergy,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
