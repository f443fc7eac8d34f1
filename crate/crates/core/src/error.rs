use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("half squared sup-norm is not smooth; pick an lp (p >= 2) or weighted l2 smoothing norm")]
    NonSmoothNorm,

    #[error("no tight analytic equivalence constants for {from} -> {to}")]
    UnsupportedEquivalence { from: String, to: String },

    #[error("envelope solver did not converge after {iterations} iterations (best value {best_value}, gap {residual})")]
    NotConverged {
        best_value: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("mu too large for this gamma: alpha2 = {alpha2} <= 0")]
    Infeasible { alpha2: f64 },

    #[error("initial stepsize {eps0} exceeds alpha2/alpha3 = {limit}; build the schedule with a larger K")]
    StepsizeTooLarge { eps0: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coverage violated at state {state}, action {action}: target puts mass where behavior does not")]
    Coverage { state: usize, action: usize },

    #[error("stationary distribution is not unique")]
    NonUniqueStationary,

    #[error("stationary distribution has a component {value} < 1e-9 at state {state}")]
    DegenerateStationary { state: usize, value: f64 },

    #[error("non-finite iterate at k = {k}")]
    NonFinite { k: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
