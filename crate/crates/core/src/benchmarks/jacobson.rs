//! Jacobson's problem on `[0, 5]`: `ẋ₁ = x₂`, `ẋ₂ = u`, `|u| ≤ 1`, minimize
//! `½∫(x₁² + x₂²)`, carried as a third state. Control `−1`, then the
//! singular feedback `u = x₁`.

use std::sync::Arc;

use super::ReferenceSolution;
use crate::problem::{ControlLaw, ControlPhase, Dynamics, Horizon, Matrix, ProblemCase, ProblemDef};

pub const HORIZON: f64 = 5.0;
pub const SWITCH_STAR: f64 = 1.413_764_087_630_064_2;

#[derive(Debug, Clone, Copy)]
pub struct Jacobson;

impl Dynamics for Jacobson {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![x[1], u[0], 0.5 * (x[0] * x[0] + x[1] * x[1])]
    }

    fn jac_x(&self, x: &[f64], _u: &[f64]) -> Matrix {
        Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, x[0], x[1], 0.0])
    }

    fn jac_u(&self, _x: &[f64], _u: &[f64]) -> Matrix {
        Matrix::from_row_slice(3, 1, &[0.0, 1.0, 0.0])
    }

    fn objective(&self, x: &[f64]) -> f64 {
        x[2]
    }

    fn objective_grad(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0, 0.0, 1.0]
    }
}

pub fn build() -> ProblemDef {
    let singular = ControlLaw::StateFeedback {
        law: Arc::new(|x, _t| vec![x[0]]),
        jacobian: Some(Arc::new(|_x, _t| Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]))),
    };
    let bx = |j, law| ControlPhase::with_box(j, law, vec![-1.0], vec![1.0]);
    ProblemDef {
        name: "jacobson".into(),
        x0: vec![0.0, 1.0, 0.0],
        horizon: Horizon::Fixed(HORIZON),
        case: ProblemCase::One,
        phases: vec![bx(0, ControlLaw::Constant(vec![-1.0])), bx(1, singular)],
        dynamics: Arc::new(Jacobson),
        case2_derivs: None,
    }
}

/// `1 − s²/2 − e^{2s−10}(−1 + 2s − s²/2)`; its root in `[1.41, 1.42]` is
/// the optimal switch.
pub fn root_residual(s: f64) -> f64 {
    1.0 - 0.5 * s * s - (2.0 * s - 10.0).exp() * (-1.0 + 2.0 * s - 0.5 * s * s)
}

pub fn reference() -> ReferenceSolution {
    ReferenceSolution {
        s_star: vec![SWITCH_STAR],
        t_star: None,
        c_star: None,
        u_sing: Some("x1".into()),
    }
}
