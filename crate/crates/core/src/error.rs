use thiserror::Error;

use crate::rounding::RoundingTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("symmetric eigen-solver did not converge")]
    EigenNonConvergence,

    #[error("empirical covariance is degenerate along direction {direction:?}")]
    DegenerateCovariance { direction: Vec<f64> },

    #[error(
        "inner-ball invariant violated at iteration {iteration}: exact radius {exact} < claimed {claimed}"
    )]
    InvariantViolation {
        iteration: usize,
        exact: f64,
        claimed: f64,
        trace: Box<RoundingTrace>,
    },

    #[error("sampler failure: {message}\n{phase_log}")]
    Sampler { message: String, phase_log: String },

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("no accepted samples after {trials} trials; increase the sample budget")]
    NoAcceptances { trials: u64 },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by malformed user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::Io(_) => true,
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
