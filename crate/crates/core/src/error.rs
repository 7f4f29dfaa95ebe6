use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by every layer of the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no event before t = {t_max}")]
    NoEventBeforeTmax { t_max: f64 },
    #[error("tangential crossing of watch {watch} at t = {t} (transversality {ratio:e})")]
    TangentialCrossing { watch: usize, t: f64, ratio: f64 },
    #[error("step size underflow at t = {t}")]
    StepFailure { t: f64 },
    #[error("non-finite vector field value at t = {t}")]
    EvaluationFailure { t: f64, point: Vec<f64> },
    #[error("eigenvalue iteration failed to converge")]
    ConvergenceFailure,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("more than {events} events within {window:e} time units near t = {t}")]
    ZenoSuspicion { events: usize, window: f64, t: f64 },
    #[error("trajectory left domain {domain} through face {face} at t = {t} with no active guard")]
    EscapeDomain { domain: usize, face: usize, t: f64 },
    #[error("no return to the section within the time horizon")]
    NoReturn,
    #[error("guard sequence differs from the nominal one: got {got:?}")]
    WrongSequence { got: Vec<usize> },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("input map has rank {achieved}, {required} required (k = {k})")]
    RankDeficient {
        achieved: usize,
        required: usize,
        k: usize,
    },
    #[error("uncontrollable modes are not confined to the target subspace")]
    NotStabilizable,
    #[error("stance allocation is rank deficient (condition number {condition:e})")]
    WrenchInfeasible { condition: f64 },
    #[error("template step time is undefined from this state")]
    StepTimeUndefined,
    #[error("phase lookup did not settle (distance {distance:e})")]
    NotConverged { distance: f64 },
}

impl Error {
    /// Coarse classification used by front ends to pick exit codes.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            TangentialCrossing { .. } | ZenoSuspicion { .. } | EscapeDomain { .. } => {
                ErrorCategory::Assumption
            }
            InvalidInput(_) | DimensionMismatch { .. } => ErrorCategory::Input,
            _ => ErrorCategory::Numerical,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            NoEventBeforeTmax { .. } => "NO_EVENT_BEFORE_TMAX",
            TangentialCrossing { .. } => "TANGENTIAL_CROSSING",
            StepFailure { .. } => "STEP_FAILURE",
            EvaluationFailure { .. } => "EVALUATION_FAILURE",
            ConvergenceFailure => "CONVERGENCE_FAILURE",
            NoConvergence { .. } => "NO_CONVERGENCE",
            SingularJacobian => "SINGULAR_JACOBIAN",
            ZenoSuspicion { .. } => "ZENO_SUSPICION",
            EscapeDomain { .. } => "ESCAPE_DOMAIN",
            NoReturn => "NO_RETURN",
            WrongSequence { .. } => "WRONG_SEQUENCE",
            DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            InvalidInput(_) => "INVALID_INPUT",
            RankDeficient { .. } => "RANK_DEFICIENT",
            NotStabilizable => "NOT_STABILIZABLE",
            WrenchInfeasible { .. } => "WRENCH_INFEASIBLE",
            StepTimeUndefined => "STEP_TIME_UNDEFINED",
            NotConverged { .. } => "NOT_CONVERGED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Numerical,
    Assumption,
}

pub type Result<T> = core::result::Result<T, Error>;
