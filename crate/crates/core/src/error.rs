use thiserror::Error;

use crate::market::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid market model: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("{0}")]
    Domain(String),

    #[error("covariance factorization failed: matrix is not numerically positive definite")]
    SingularFactorization,

    #[error("trader index {index} out of range for {count} traders")]
    TraderIndex { index: usize, count: usize },

    #[error("model is trivial (aggregate exposure a_I = 0); betas are undefined")]
    TrivialModel,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("best-response fixed point violated for trader {trader}: expected {expected}, best response {actual}")]
    FixedPoint {
        trader: usize,
        expected: String,
        actual: String,
    },

    #[error("cross-check mismatch in {what}: {left} vs {right}")]
    Mismatch {
        what: String,
        left: f64,
        right: f64,
    },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
