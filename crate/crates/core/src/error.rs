//! Error type shared by every module of the crate.

use thiserror::Error;

use crate::transport::State;

/// Named modelling hypothesis a scenario can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Bounded doping profile.
    H1,
    /// Regular boundary data.
    H2,
    /// Boundary data in thermal equilibrium, `N^D * P^D = 1`.
    H3,
    /// Initial and boundary densities in `[0, M]`.
    H4,
    /// Linear growth bound on the recombination prefactor.
    H5,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3 => "H3",
            Hypothesis::H4 => "H4",
            Hypothesis::H5 => "H5",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("boundary partition error: {0}")]
    Partition(String),

    #[error("boundary partition has no Dirichlet edges (measure of the Dirichlet boundary is zero)")]
    MeasureZeroDirichlet,

    #[error(
        "boundary data not in thermal equilibrium: alpha candidates deviate by {max_deviation:e} (tolerance {tol:e})"
    )]
    InconsistentBoundaryData { max_deviation: f64, tol: f64 },

    #[error("hypothesis {hypothesis} violated: {detail}")]
    HypothesisViolation { hypothesis: Hypothesis, detail: String },

    #[error("linear solver failure in {what}: residual {residual:e}")]
    Solver { what: &'static str, residual: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("time step did not converge after {retries} retries (last residual {residual:e}, {reason})")]
    StepFailure {
        retries: usize,
        residual: f64,
        reason: &'static str,
        last_iterate: Box<State>,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("verification failure: {0}")]
    Verification(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("scenario document: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
