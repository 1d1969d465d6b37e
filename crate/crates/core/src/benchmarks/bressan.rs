//! Bressan's problem: `ẋ₁ = u`, `ẋ₂ = −x₁`, `|u| ≤ 1`, minimize
//! `∫(x₁² − x₂)`, carried as a third state. Control `−1`, then `1/2`, with
//! the switch at `T/3`.

use std::sync::Arc;

use super::ReferenceSolution;
use crate::problem::{ControlLaw, ControlPhase, Dynamics, Horizon, Matrix, ProblemCase, ProblemDef};

#[derive(Debug, Clone, Copy)]
pub struct Bressan;

impl Dynamics for Bressan {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![u[0], -x[0], x[0] * x[0] - x[1]]
    }

    fn jac_x(&self, x: &[f64], _u: &[f64]) -> Matrix {
        Matrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 2.0 * x[0], -1.0, 0.0])
    }

    fn jac_u(&self, _x: &[f64], _u: &[f64]) -> Matrix {
        Matrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0])
    }

    fn objective(&self, x: &[f64]) -> f64 {
        x[2]
    }

    fn objective_grad(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0, 0.0, 1.0]
    }
}

pub fn build(t_final: f64) -> ProblemDef {
    let bx = |j, u: f64| ControlPhase::with_box(j, ControlLaw::Constant(vec![u]), vec![-1.0], vec![1.0]);
    ProblemDef {
        name: "bressan".into(),
        x0: vec![0.0; 3],
        horizon: Horizon::Fixed(t_final),
        case: ProblemCase::One,
        phases: vec![bx(0, -1.0), bx(1, 0.5)],
        dynamics: Arc::new(Bressan),
        case2_derivs: None,
    }
}

pub fn reference(t_final: f64) -> ReferenceSolution {
    ReferenceSolution {
        s_star: vec![t_final / 3.0],
        t_star: None,
        c_star: None,
        u_sing: Some("0.5".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_phase_rates() {
        let prob = build(10.0);
        let f = prob.phase_dynamics(1, 5.0, &[0.7, 2.0, 0.0], None).unwrap();
        assert_eq!(&f[..2], &[0.5, -0.7]);
    }
}
