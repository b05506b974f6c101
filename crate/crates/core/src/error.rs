use thiserror::Error;

/// Errors raised by grid construction, operator assembly and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degree {k} out of range for {what}")]
    Degree { k: usize, what: &'static str },
    #[error("invalid delta specification: {0}")]
    InvalidDelta(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("singular system (pivot ratio {pivot_ratio:.3e})")]
    Singular { pivot_ratio: f64 },
    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("CFL violated: dt = {dt:.6e} exceeds limit {limit:.6e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("pure Neumann problem has a floating constant; supply a gauge node")]
    FloatingNullSpace,
    #[error("incompatible boundary flux: net {net:.6e}, expected {expected:.6e}")]
    IncompatibleFlux { net: f64, expected: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
