use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    #[error("degenerate space: {0}")]
    DegenerateSpace(String),

    #[error("kernel parameter constraint violated: {0}")]
    Constraint(String),

    #[error("kernel form is indefinite (lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e})")]
    Indefinite { lambda_min: f64, lambda_max: f64 },

    #[error("nonlocal subspace is trivial (no eigenvalue above the rank cutoff)")]
    TrivialSubspace,

    #[error("field lies outside the nonlocal subspace (residual {residual:e}, norm {norm:e})")]
    SubspaceMembership { residual: f64, norm: f64 },

    #[error("activation `{0}` is not Lipschitz: ineligible for certificates")]
    NotLipschitz(String),

    #[error("declared Lipschitz constant {declared} violated between x = {x0} and x = {x1} (slope {slope})")]
    DeclaredConstant { declared: f64, x0: f64, x1: f64, slope: f64 },

    #[error("noise mode count mismatch: expected {expected}, got {got}")]
    ModeCount { expected: usize, got: usize },

    #[error("nonlocal constants requested without a metric")]
    MissingMetric,

    #[error("non-finite state at t = {time} on path {path}")]
    BlowUp { time: f64, path: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("certificate did not pass: {0}")]
    CertificateFailed(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<V> = std::result::Result<V, Error>;
