use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid interval [{lo}, {hi}): lower bound must be below upper bound")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("coupling strength is zero, relaxation time is infinite")]
    ZeroCoupling,

    #[error(
        "eigensolver failed on {dim}x{dim} matrix ({reason}); \
         frobenius norm {frobenius:.6e}, max |entry| {max_abs:.6e}, \
         diagonal span [{diag_min:.6e}, {diag_max:.6e}]"
    )]
    Eigensolver {
        dim: usize,
        reason: String,
        frobenius: f64,
        max_abs: f64,
        diag_min: f64,
        diag_max: f64,
    },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("oracle guard: {what} = {value} exceeds limit {limit}")]
    OracleGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("branch died at step {step}: squared norm {norm_sq:.3e} below floor")]
    DeadBranch { step: usize, norm_sq: f64 },

    #[error("ensemble incomplete: {steps_done} of {length} steps propagated")]
    IncompleteEnsemble { steps_done: usize, length: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
