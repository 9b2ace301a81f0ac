use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The LMO was asked for a zero direction; the iterate is optimal.
    #[error("zero gradient: iterate is optimal")]
    ZeroGradient,

    #[error("degenerate direction: x - v vanishes")]
    DegenerateDirection,

    #[error("unsupported objective: {0}")]
    UnsupportedObjective(String),

    #[error("infeasible start: ||x0||_p = {norm} exceeds 1")]
    InfeasibleStart { norm: f64 },

    #[error("bracket failure at u = {u}: H(lo = {lo}) = {h_lo}, H(hi = {hi}) = {h_hi}")]
    BracketFailure {
        u: f64,
        lo: f64,
        hi: f64,
        h_lo: f64,
        h_hi: f64,
    },

    #[error("fixed-point tolerance {tol} not reached at u = {u} (residual {residual})")]
    ToleranceNotReached { u: f64, tol: f64, residual: f64 },

    #[error("p = {0} is outside the supported range (p >= 3 required)")]
    UnsupportedExponent(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
