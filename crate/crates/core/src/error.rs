use thiserror::Error;

use crate::active::ActiveFit;
use crate::variational::VariationalFit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("absolute continuity violated at index {index}: p = {p} but q = 0")]
    AbsoluteContinuityViolation { index: usize, p: f64 },

    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("complexity refusal: {what} needs {needed} entries, cap is {cap}")]
    ComplexityRefusal {
        what: &'static str,
        needed: f64,
        cap: usize,
    },

    #[error("conditioning on an event of probability {prob:e}")]
    ConditioningOnNullEvent { prob: f64 },

    #[error("observed data has zero probability under every hypothesis")]
    ZeroEvidence,

    #[error("variational fit did not converge after {} sweeps (last delta {:e})", .0.report.sweeps, .0.report.last_delta)]
    CaviNonConvergence(Box<VariationalFit>),

    #[error("Blahut-Arimoto did not converge after {iterations} iterations (capacity bound {bound})")]
    CapacityNonConvergence { bound: f64, iterations: usize },

    #[error("active inference did not converge after {} outer iterations", .0.report.objective_trace.len())]
    ActiveNonConvergence(Box<ActiveFit>),

    #[error("motivation `{0}` needs the parameter posterior, which this view or selector cannot provide")]
    MotivationUnsupported(String),

    #[error("horizon of {len} steps is too short: {reason}")]
    HorizonTooShort { len: usize, reason: &'static str },

    #[error("unknown query: {0}")]
    UnknownQuery(String),

    #[error("oracle infeasible: {0}")]
    OracleInfeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("agent failed at step {step}: {source}")]
    Agent {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn complexity(what: &'static str, needed: f64, cap: usize) -> Self {
        Error::ComplexityRefusal { what, needed, cap }
    }

    /// True for the refusals raised when an enumeration would exceed its cap,
    /// including ones wrapped in an agent step error.
    pub fn is_complexity(&self) -> bool {
        match self {
            Error::ComplexityRefusal { .. } => true,
            Error::Agent { source, .. } => source.is_complexity(),
            _ => false,
        }
    }

    pub fn is_non_convergence(&self) -> bool {
        match self {
            Error::CaviNonConvergence(_)
            | Error::CapacityNonConvergence { .. }
            | Error::ActiveNonConvergence(_) => true,
            Error::Agent { source, .. } => source.is_non_convergence(),
            _ => false,
        }
    }
}
