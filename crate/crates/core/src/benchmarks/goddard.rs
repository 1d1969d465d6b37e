//! Goddard's rocket with free final time. States `(h, v, m)`, thrust
//! `u ∈ [0, u_max]`; the constraint `m ≥ 1` is replaced by the penalty
//! objective `−h(T) + β(m(T) − 1) + ρ/2·(m(T) − 1)²`.
//!
//! Velocity obeys `v̇ = (u − σv²e^{−h/h₀})/m − g`, and the singular thrust
//! uses the same `e^{−h/h₀}` drag factor.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ReferenceSolution;
use crate::problem::{ControlLaw, ControlPhase, Dynamics, Horizon, Matrix, ProblemCase, ProblemDef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoddardParams {
    pub u_max: f64,
    pub g: f64,
    pub sigma: f64,
    pub c: f64,
    pub h0: f64,
    pub beta_pen: f64,
    pub rho_pen: f64,
}

impl Default for GoddardParams {
    fn default() -> Self {
        Self {
            u_max: 193.0,
            g: 32.174,
            sigma: 5.4915e-5,
            c: 1580.9425,
            h0: 23800.0,
            beta_pen: -2.31774080357308e4,
            rho_pen: 1e5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Goddard(pub GoddardParams);

impl Goddard {
    fn drag(&self, x: &[f64]) -> f64 {
        self.0.sigma * x[1] * x[1] * (-x[0] / self.0.h0).exp()
    }

    /// Singular thrust `D + mg + mg/(1 + 4κ + 2κ²)·[c²/(h₀g)(1 + 1/κ) − 1 − 2κ]`
    /// with `κ = c/v`.
    pub fn singular_thrust(&self, x: &[f64]) -> f64 {
        let p = &self.0;
        let (v, m) = (x[1], x[2]);
        let kappa = p.c / v;
        let mg = m * p.g;
        self.drag(x)
            + mg
            + mg / (1.0 + 4.0 * kappa + 2.0 * kappa * kappa)
                * (p.c * p.c / (p.h0 * p.g) * (1.0 + 1.0 / kappa) - 1.0 - 2.0 * kappa)
    }
}

impl Dynamics for Goddard {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![x[1], (u[0] - self.drag(x)) / x[2] - self.0.g, -u[0] / self.0.c]
    }

    fn jac_x(&self, x: &[f64], u: &[f64]) -> Matrix {
        let d = self.drag(x);
        let m = x[2];
        Matrix::from_row_slice(
            3,
            3,
            &[
                0.0,
                1.0,
                0.0,
                d / (self.0.h0 * m),
                -2.0 * d / (x[1] * m),
                -(u[0] - d) / (m * m),
                0.0,
                0.0,
                0.0,
            ],
        )
    }

    fn jac_u(&self, x: &[f64], _u: &[f64]) -> Matrix {
        Matrix::from_row_slice(3, 1, &[0.0, 1.0 / x[2], -1.0 / self.0.c])
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let dm = x[2] - 1.0;
        -x[0] + self.0.beta_pen * dm + 0.5 * self.0.rho_pen * dm * dm
    }

    fn objective_grad(&self, x: &[f64]) -> Vec<f64> {
        vec![-1.0, 0.0, self.0.beta_pen + self.0.rho_pen * (x[2] - 1.0)]
    }
}

pub fn build(params: &GoddardParams) -> ProblemDef {
    build_with_guess(params, 42.0)
}

pub fn build_with_guess(params: &GoddardParams, t_guess: f64) -> ProblemDef {
    let dynamics = Goddard(*params);
    let singular = ControlLaw::StateFeedback {
        law: Arc::new(move |x, _t| vec![dynamics.singular_thrust(x)]),
        jacobian: None,
    };
    let bx = |j, law| ControlPhase::with_box(j, law, vec![0.0], vec![params.u_max]);
    ProblemDef {
        name: "goddard".into(),
        x0: vec![0.0, 0.0, 3.0],
        horizon: Horizon::Free { guess: t_guess },
        case: ProblemCase::One,
        phases: vec![
            bx(0, ControlLaw::Constant(vec![params.u_max])),
            bx(1, singular),
            bx(2, ControlLaw::Constant(vec![0.0])),
        ],
        dynamics: Arc::new(dynamics),
        case2_derivs: None,
    }
}

pub fn reference() -> ReferenceSolution {
    ReferenceSolution {
        s_star: vec![13.75532627577406, 21.98890645593362],
        t_star: Some(42.88910958027504),
        c_star: None,
        u_sing: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_differences() {
        let g = Goddard(GoddardParams::default());
        let x = [5000.0, 600.0, 2.0];
        let u = [100.0];
        let j = g.jac_x(&x, &u);
        for c in 0..3 {
            let h = 1e-6 * x[c].abs();
            let mut xp = x;
            xp[c] += h;
            let mut xm = x;
            xm[c] -= h;
            let (fp, fm) = (g.rhs(&xp, &u), g.rhs(&xm, &u));
            for r in 0..3 {
                let fd = (fp[r] - fm[r]) / (2.0 * h);
                assert!((fd - j[(r, c)]).abs() < 1e-7 * fd.abs().max(1.0), "({r},{c})");
            }
        }
    }
}
