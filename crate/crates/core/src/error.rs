use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("backward step at k={k} is not a contraction: ‖A⁻¹(k)‖·γ(k) = {factor} ≥ 1")]
    ContractionViolated { k: usize, factor: f64 },

    #[error("{what} did not converge after {iterations} iterations (last update {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("truncation policy rejected: {0}")]
    PolicyRejected(String),

    #[error("derivative of order {needed} requested but the perturbation only provides order {available}")]
    MissingDerivative { needed: usize, available: usize },

    #[error("Jacobian of G at k={k} is numerically singular (condition number {condition:e})")]
    SingularJacobian { k: usize, condition: f64 },

    #[error("tail of {series} cannot be bounded (term ratio {ratio})")]
    TailUnbounded { series: String, ratio: f64 },

    #[error("missing envelope: {0}")]
    MissingEnvelope(String),

    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),

    #[error("derivation needs order {needed} but expressions are bounded by r = {r}")]
    OrderOverflow { needed: u32, r: u32 },

    #[error("precondition failed: condition {condition} is not satisfied")]
    PreconditionFailed { condition: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
