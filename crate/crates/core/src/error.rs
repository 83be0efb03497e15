use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("component index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("suboptimality ratio undefined: F(0) equals the optimal value")]
    DegenerateRatio,

    #[error("query point outside the determined span (|<v_k, w>| = {overlap:e})")]
    OutsideDeterminedSpan { overlap: f64 },

    #[error("cannot extend orthonormal frame: residual norm below threshold after {attempts} draws")]
    FrameExhausted { attempts: usize },

    #[error("algorithm emitted a non-finite query point at step {step}")]
    NonFiniteQuery { step: usize },

    #[error("numeric minimization failed: gradient norm {grad_norm:e} after {iters} iterations")]
    MinimizationFailed { grad_norm: f64, iters: usize },

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("optimizer diverged at call {calls} (ratio {ratio:e})")]
    Diverged { calls: u64, ratio: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
