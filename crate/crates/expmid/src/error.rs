use thiserror::Error;

/// Everything that can go wrong in a solver or estimator run.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator solve failed: {0}")]
    SolveFailed(String),

    #[error(
        "Krylov iteration did not converge within {max_dim} vectors \
         (residual estimate {residual:.3e})"
    )]
    KrylovNoConvergence { max_dim: usize, residual: f64 },

    #[error(
        "fixed-point iteration did not converge in {max_iter} iterations \
         (last increment {last_increment:.3e})"
    )]
    FixedPointNoConvergence { max_iter: usize, last_increment: f64 },

    #[error("time {t} lies outside the step interval [{left}, {right}]")]
    OutOfStep { t: f64, left: f64, right: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("problem provides no exact solution or reference trajectory")]
    MissingExact,

    #[error("step {step} failed: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("estimator integrand failed at step {step}, quadrature node {node}: {source}")]
    AtNode {
        step: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach the 1-based step index at which the error occurred.
    pub fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Attach step and quadrature-node indices.
    pub fn at_node(self, step: usize, node: usize) -> Error {
        Error::AtNode {
            step,
            node,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
