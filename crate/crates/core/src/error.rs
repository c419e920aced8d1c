use thiserror::Error;

/// Errors raised by the solvers, integrators and pipelines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input domain error: {0}")]
    InputDomain(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("failed to converge ({reason}); last bracket [{lo}, {hi}]")]
    Convergence { reason: String, lo: f64, hi: f64 },

    #[error("degenerate gradient: derivative sum {0:e} below threshold")]
    DegenerateGradient(f64),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("unsupported entropy index {0}")]
    UnsupportedIndex(f64),

    #[error("normalization failed: {0}")]
    Normalization(String),

    #[error("step size {dt:e} exceeds stability limit {limit:e}")]
    Stability { dt: f64, limit: f64 },

    #[error("value {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InputDomain(format!("{what}[{i}] = {} is not finite", values[i]))),
        None => Ok(()),
    }
}
