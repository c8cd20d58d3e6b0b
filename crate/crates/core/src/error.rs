use thiserror::Error;

/// Errors raised by graph construction, weighting schemes, curvature and flow routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gave up after {attempts} attempts: {what}")]
    RetryLimit { what: String, attempts: usize },

    #[error("threshold {threshold} infeasible at vertex {vertex} with degree {degree}")]
    InfeasibleThreshold {
        vertex: usize,
        degree: usize,
        threshold: f64,
    },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("weighting scheme is not Markovian (row {row} sums to {sum})")]
    NotMarkovian { row: usize, sum: f64 },

    #[error("row {row} cannot be renormalized: no off-diagonal mass")]
    UncorrectableRow { row: usize },

    #[error("S2 block of Gamma2 at vertex {vertex} is not positive semidefinite (eigenvalue {eigenvalue})")]
    PsdViolation { vertex: usize, eigenvalue: f64 },

    #[error("curvature upper bound undefined at isolated vertex {0}")]
    IsolatedVertex(usize),

    #[error("flow diverged at t = {time} (step {step})")]
    Divergence { time: f64, step: usize },

    #[error("weighting scheme is not a curvature sharp Markovian equilibrium: {0}")]
    NotAnEquilibrium(String),

    #[error("flow stopped by correction policy at t = {0}")]
    Stopped(f64),

    #[error("eigenvalue computation failed: {0}")]
    Eigensolver(String),

    #[error("{context}: {message}")]
    Io { context: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
