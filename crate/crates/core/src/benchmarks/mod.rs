//! The four reference problems: catalyst mixing, Jacobson's problem,
//! Bressan's problem, and Goddard's rocket with a terminal-mass penalty.

pub mod bressan;
pub mod catalyst;
pub mod goddard;
pub mod jacobson;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{ReferenceErrors, SolveReport};
use crate::problem::{ProblemDef, SwitchConfig};

/// Known optimum of a benchmark (switch points in time units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub s_star: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_sing: Option<String>,
}

impl ReferenceSolution {
    pub fn errors(&self, cfg: &SwitchConfig, objective: f64) -> ReferenceErrors {
        ReferenceErrors {
            s: cfg.s.iter().zip(&self.s_star).map(|(a, b)| (a - b).abs()).collect(),
            t_final: self.t_star.zip(cfg.t_final).map(|(a, b)| (a - b).abs()),
            objective: self.c_star.map(|c| (objective - c).abs()),
        }
    }

    pub fn annotate(&self, report: &mut SolveReport) {
        report.reference_errors = Some(self.errors(&report.final_cfg, report.objective));
    }
}

/// A named problem with its default starting point and reference optimum.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub problem: ProblemDef,
    pub start: SwitchConfig,
    pub reference: Option<ReferenceSolution>,
}

pub const NAMES: [&str; 5] = ["catalyst1", "catalyst2", "jacobson", "bressan", "goddard"];

/// Looks up a benchmark by CLI name. `horizon` overrides the default
/// length of fixed-horizon problems (catalyst, Bressan) or the initial
/// guess of free-horizon ones (Goddard).
pub fn by_name(name: &str, horizon: Option<f64>) -> Result<Benchmark> {
    match name {
        "catalyst1" | "catalyst2" => {
            let case = if name == "catalyst1" {
                crate::problem::ProblemCase::One
            } else {
                crate::problem::ProblemCase::Two
            };
            let params = catalyst::CatalystParams {
                t_final: horizon.unwrap_or(1.0),
                case,
                ..Default::default()
            };
            Ok(Benchmark {
                problem: catalyst::build(&params),
                start: catalyst::default_start(&params),
                reference: Some(catalyst::reference(&params)),
            })
        }
        "jacobson" => {
            if horizon.is_some_and(|t| t != jacobson::HORIZON) {
                return Err(Error::InvalidConfig(format!(
                    "jacobson has fixed horizon {}",
                    jacobson::HORIZON
                )));
            }
            Ok(Benchmark {
                problem: jacobson::build(),
                start: SwitchConfig::new(vec![1.41]),
                reference: Some(jacobson::reference()),
            })
        }
        "bressan" => {
            let t = horizon.unwrap_or(10.0);
            Ok(Benchmark {
                problem: bressan::build(t),
                start: SwitchConfig::new(vec![0.3 * t]),
                reference: Some(bressan::reference(t)),
            })
        }
        "goddard" => {
            let params = goddard::GoddardParams::default();
            let t0 = horizon.unwrap_or(42.0);
            Ok(Benchmark {
                problem: goddard::build_with_guess(&params, t0),
                start: SwitchConfig::new(vec![13.0, 21.0]).with_t_final(t0),
                reference: Some(goddard::reference()),
            })
        }
        other => Err(Error::InvalidConfig(format!(
            "unknown problem '{other}' (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}
