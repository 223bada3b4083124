use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    DimensionMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("operator `{name}` is not Hermitian (residual {residual:e})")]
    NotHermitian { name: String, residual: f64 },

    #[error("explicit OU update unstable: gamma*dt = {product} must be < 1")]
    UnstableGrid { product: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("state is not normalized (squared norm {norm_sq})")]
    NotNormalized { norm_sq: f64 },

    #[error("model kind mismatch: expected {expected}, found {found}")]
    WrongModelKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("estimate mode mismatch: expected {expected}, found {found}")]
    WrongMode {
        expected: &'static str,
        found: &'static str,
    },

    #[error("non-finite state after Euler-Maruyama step")]
    Overflow,

    #[error("norm vanished before renormalization ({norm:e})")]
    VanishingNorm { norm: f64 },

    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },

    #[error("H and K do not commute (residual {residual:e})")]
    NonCommuting { residual: f64 },

    #[error("polynomial degree {0} exceeds the supported maximum of 2")]
    DegreeTooHigh(usize),

    #[error("{failed} of {total} trajectories diverged (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
