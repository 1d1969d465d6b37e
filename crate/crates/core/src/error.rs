use thiserror::Error;

use crate::optimizer::SolveReport;

/// Failures raised by the adaptive integrator.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OdeError {
    #[error("step limit of {max_steps} exceeded at t = {t}")]
    StepLimitExceeded { max_steps: usize, t: f64 },
    #[error(
        "required step {h:e} fell below h_min = {h_min:e} at t = {t}; the system is stiff or \
         blowing up (try tighter tolerances or a shorter phase)"
    )]
    StepUnderflow { t: f64, h: f64, h_min: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ode(#[from] OdeError),

    #[error("phase {phase} uses a state-costate feedback law but no costate was supplied")]
    MissingCostate { phase: usize },

    #[error("finite-difference derivative is not finite (phase {phase}, t = {t})")]
    NonFiniteDerivative { phase: usize, t: f64 },

    #[error("invalid switch order: {0}")]
    InvalidSwitchOrder(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("horizon {horizon} cannot hold {count} switch points separated by {gap}")]
    InfeasiblePolytope { horizon: f64, count: usize, gap: f64 },

    #[error("optimizer hit the iteration limit (stationarity {:.3e})", report.stationarity)]
    MaxItersExceeded { report: Box<SolveReport> },

    #[error("line search failed to decrease the objective (stationarity {:.3e})", report.stationarity)]
    LineSearchFailure { report: Box<SolveReport> },

    #[error("secant iteration diverged: {0}")]
    SecantDivergence(String),

    #[error("no usable switching structure: {0}")]
    NoStructure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
