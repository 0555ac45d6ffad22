use thiserror::Error;

/// Errors raised by the solvers, the learner and the data plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Q must be positive semi-definite and R positive definite.
    #[error("Assumption 1 violated: {0}")]
    Assumption(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error(
        "infeasible penalty at iteration {iteration}: min eigenvalue of lambda*I - alpha*E'PE is \
         {min_eigenvalue:e}; choose a larger lambda"
    )]
    InfeasiblePenalty {
        iteration: usize,
        min_eigenvalue: f64,
    },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("numerical conditioning: {0}")]
    Conditioning(String),

    #[error("saddle structure lost: {0}")]
    SaddleStructure(String),

    #[error("rollout diverged at step {step} (|x|_inf > {limit:e})")]
    RolloutDivergence { step: usize, limit: f64 },

    #[error(
        "insufficient excitation: regression normal matrix condition number {condition:e} exceeds \
         {limit:e}; increase exploration noise or the trajectory length"
    )]
    Excitation { condition: f64, limit: f64 },

    #[error("grid bounds exceeded: {0}; widen the search bounds")]
    GridBounds(String),

    /// Wraps an error raised at a given learning iteration.
    #[error("learning iteration {iteration}: {source}")]
    Learning {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Learning {
            iteration,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Learning { source, .. } => source.root(),
            other => other,
        }
    }
}
