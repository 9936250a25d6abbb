use thiserror::Error;

/// Errors reported by the numerical pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge: {what} (difference {difference:.3e} between {nodes} and {doubled} nodes)")]
    QuadratureNonConvergence {
        what: String,
        nodes: usize,
        doubled: usize,
        difference: f64,
    },

    #[error("eigen-iteration failed: {0}")]
    EigenFailure(String),

    #[error("eigenvalue at critical threshold: mu = {mu} is within {tolerance:e} of {threshold}")]
    ThresholdEigenvalue {
        mu: f64,
        threshold: f64,
        tolerance: f64,
    },

    #[error("integrator failed at r = {r}: {reason}")]
    Integrator { r: f64, reason: String },

    #[error("empty bracket [{lo:e}, {hi:e}]: matching function does not change sign")]
    EmptyBracket { lo: f64, hi: f64 },

    #[error("bracket [{lo:e}, {hi:e}] contains more than one root; refine it")]
    MultipleRoots { lo: f64, hi: f64 },

    #[error("grid not converged: {0}")]
    GridNotConverged(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("fit residual {residual:.3e} above {limit:.1e} on window [{lo:e}, {hi:e}]")]
    WindowResidual {
        residual: f64,
        limit: f64,
        lo: f64,
        hi: f64,
    },

    #[error("node at matching radius r = {0}")]
    NodeAtMatchingRadius(f64),

    #[error("ladder step {n}: {source}")]
    Ladder {
        n: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
