//! Error type shared by all solver and diagnostic modules.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid must have at least one step")]
    ZeroSteps,

    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),

    #[error("lattice dimension {dim} unsupported: product lattices are limited to d <= {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("step {step} out of range (grid has {n_steps} steps)")]
    StepOutOfRange { step: usize, n_steps: usize },

    #[error("process shape mismatch: expected {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered at step {step}, node {node}")]
    NonFiniteValue { step: usize, node: usize },

    #[error("barriers crossed at step {step}, node {node}: L = {lower} > U = {upper}")]
    CrossedBarriers {
        step: usize,
        node: usize,
        lower: f64,
        upper: f64,
    },

    #[error(
        "contraction check failed: A*dt = {a_dt:.6} >= 1; increase n_steps to at least {required_steps}"
    )]
    NonContraction { a_dt: f64, required_steps: usize },

    #[error("fixed point did not converge at step {step}, node {node}: residual {residual:.3e}")]
    FixedPointDivergence {
        step: usize,
        node: usize,
        residual: f64,
    },

    #[error(
        "ladder monotonicity violated at n = {n}: step {step}, node {node}, gap {gap:.3e}"
    )]
    MonotonicityViolation {
        n: f64,
        step: usize,
        node: usize,
        gap: f64,
    },

    #[error("missing generator parameter `{0}`")]
    MissingParameter(&'static str),

    #[error("invalid modulus `{name}`: {detail}")]
    InvalidModulus { name: &'static str, detail: String },

    #[error("invalid generator split: {0}")]
    InvalidSplit(String),

    #[error("empty or invalid search domain: {0}")]
    EmptySearchDomain(String),

    #[error("regression system is singular at step {step} (condition number {cond:.3e})")]
    SingularRegression { step: usize, cond: f64 },

    #[error("expression parse error at byte {pos}: {msg}")]
    ExprParse { pos: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
