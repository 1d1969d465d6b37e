//! Switch-point optimization for optimal control problems whose solution is
//! bang-bang or singular.
//!
//! A control problem with a known phase structure is reduced to a smooth
//! finite-dimensional problem over the switch points (plus the initial
//! costate and the terminal time when needed). The objective and its exact
//! gradient come from one forward state sweep and one backward costate sweep.
//!
//! ```
//! use switchpoint::benchmarks::bressan;
//! use switchpoint::gradients::{evaluate_gradient, EvalSettings};
//! use switchpoint::problem::SwitchConfig;
//!
//! let prob = bressan::build(10.0);
//! let g = evaluate_gradient(&prob, &SwitchConfig::new(vec![10.0 / 3.0]), &EvalSettings::default())
//!     .unwrap();
//! assert!(g.d_s[0].abs() < 1e-8);
//! ```

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod error;
pub mod fdcheck;
pub mod gradients;
pub mod odeint;
pub mod optimizer;
pub mod par;
pub mod problem;
pub mod warmstart;

pub use error::{Error, OdeError, Result};
pub use gradients::{evaluate_gradient, EvalSettings, GradientBundle};
pub use optimizer::{minimize, secant_switch, OptimizeSettings, SolveReport};
pub use par::Exec;
pub use problem::{ControlLaw, ControlPhase, Dynamics, Horizon, ProblemCase, ProblemDef, SwitchConfig};
