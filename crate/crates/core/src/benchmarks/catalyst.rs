//! Catalyst mixing in a tubular reactor: `A ⇌ B → C` with catalyst fraction
//! `u ∈ [0, 1]`; minimize `a(T) + b(T) − 1`. Optimal pattern: bang (u = 1),
//! singular, off (u = 0).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ReferenceSolution;
use crate::problem::{
    ControlLaw, ControlPhase, Dynamics, GeneralizedArgs, Horizon, Matrix, ProblemCase, ProblemDef,
    SwitchConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatalystParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub t_final: f64,
    pub case: ProblemCase,
}

impl Default for CatalystParams {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 10.0,
            k3: 1.0,
            t_final: 1.0,
            case: ProblemCase::One,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Catalyst {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Catalyst {
    fn reaction(&self, x: &[f64]) -> f64 {
        self.k1 * x[0] - self.k2 * x[1]
    }
}

impl Dynamics for Catalyst {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let r = self.reaction(x);
        vec![-u[0] * r, u[0] * r - (1.0 - u[0]) * self.k3 * x[1]]
    }

    fn jac_x(&self, _x: &[f64], u: &[f64]) -> Matrix {
        let (k1, k2, k3, u) = (self.k1, self.k2, self.k3, u[0]);
        Matrix::from_row_slice(2, 2, &[-u * k1, u * k2, u * k1, -u * k2 - (1.0 - u) * k3])
    }

    fn jac_u(&self, x: &[f64], _u: &[f64]) -> Matrix {
        let r = self.reaction(x);
        Matrix::from_row_slice(2, 1, &[-r, r + self.k3 * x[1]])
    }

    fn objective(&self, x: &[f64]) -> f64 {
        x[0] + x[1] - 1.0
    }

    fn objective_grad(&self, _x: &[f64]) -> Vec<f64> {
        vec![1.0, 1.0]
    }
}

/// Constant singular control `α(1+α)/(β+(1+α)²)` with `α = √(k₃/k₂)`, `β = k₁/k₂`.
pub fn singular_control(p: &CatalystParams) -> f64 {
    let alpha = (p.k3 / p.k2).sqrt();
    let beta = p.k1 / p.k2;
    alpha * (1.0 + alpha) / (beta + (1.0 + alpha).powi(2))
}

/// Singular control as a function of state and costate, from the second
/// derivative of the switching function.
pub fn singular_feedback(k: &Catalyst, x: &[f64], p: &[f64]) -> f64 {
    let (num, den) = feedback_parts(k, x, p);
    num / den
}

fn feedback_parts(k: &Catalyst, x: &[f64], p: &[f64]) -> (f64, f64) {
    let (k1, k2, k3) = (k.k1, k.k2, k.k3);
    let (a, b) = (x[0], x[1]);
    let kk = k2 - k3 - k1;
    let num = -k3 * (k1 * a * p[1] + k2 * b * p[0]);
    let den = p[0] * (k2 * b * kk - 2.0 * k1 * k2 * a) + p[1] * (k1 * a * kk + 2.0 * k1 * k2 * b);
    (num, den)
}

/// `(∂φ/∂x, ∂φ/∂p)` of [`singular_feedback`].
fn feedback_gradient(k: &Catalyst, x: &[f64], p: &[f64]) -> ([f64; 2], [f64; 2]) {
    let (k1, k2, k3) = (k.k1, k.k2, k.k3);
    let (a, b) = (x[0], x[1]);
    let kk = k2 - k3 - k1;
    let (num, den) = feedback_parts(k, x, p);
    let dn = [-k3 * k1 * p[1], -k3 * k2 * p[0], -k3 * k2 * b, -k3 * k1 * a];
    let dd = [
        -2.0 * k1 * k2 * p[0] + k1 * kk * p[1],
        k2 * kk * p[0] + 2.0 * k1 * k2 * p[1],
        k2 * b * kk - 2.0 * k1 * k2 * a,
        k1 * a * kk + 2.0 * k1 * k2 * b,
    ];
    let q = |i: usize| (dn[i] * den - num * dd[i]) / (den * den);
    ([q(0), q(1)], [q(2), q(3)])
}

/// Analytic `(∇ₓ𝓗_j, ∇ₚ𝓗_j)`. With `f = g₀(x) + u B(x)` and
/// `∇ₓf = G₀ + u G₁`, `𝓗 = y₁g₀ − p G₀ y₂ᵀ + φ A` where `A = y₁B − p G₁ y₂ᵀ`.
fn case2_derivatives(k: Catalyst, u_const: [Option<f64>; 3]) -> crate::problem::Case2DerivativesFn {
    Arc::new(move |j: usize, _t: f64, g: &GeneralizedArgs<'_>| {
        let (k1, k2, k3) = (k.k1, k.k2, k.k3);
        let (x, p, y1, y2) = (g.x, g.p, g.y1, g.y2);
        let u = u_const[j].unwrap_or_else(|| singular_feedback(&k, x, p));
        let g0 = [[0.0, 0.0], [0.0, -k3]];
        let g1 = [[-k1, k2], [k1, -k2 + k3]];
        // ∇ₓ(y₁g₀) and ∇ₓ(y₁B)
        let d_y1g0 = [0.0, -k3 * y1[1]];
        let d_y1b = [-k1 * y1[0] + k1 * y1[1], k2 * y1[0] + (k3 - k2) * y1[1]];
        let mut gx = [d_y1g0[0] + u * d_y1b[0], d_y1g0[1] + u * d_y1b[1]];
        let mut gp = [0.0; 2];
        for i in 0..2 {
            gp[i] = -(g0[i][0] * y2[0] + g0[i][1] * y2[1]) - u * (g1[i][0] * y2[0] + g1[i][1] * y2[1]);
        }
        if u_const[j].is_none() {
            let r = k1 * x[0] - k2 * x[1];
            let bvec = [-r, r + k3 * x[1]];
            let pg1y2: f64 = (0..2)
                .map(|i| p[i] * (g1[i][0] * y2[0] + g1[i][1] * y2[1]))
                .sum();
            let a = y1[0] * bvec[0] + y1[1] * bvec[1] - pg1y2;
            let (dx, dp) = feedback_gradient(&k, x, p);
            for i in 0..2 {
                gx[i] += a * dx[i];
                gp[i] += a * dp[i];
            }
        }
        (gx.to_vec(), gp.to_vec())
    })
}

pub fn build(params: &CatalystParams) -> ProblemDef {
    let k = Catalyst {
        k1: params.k1,
        k2: params.k2,
        k3: params.k3,
    };
    let singular = match params.case {
        ProblemCase::One => ControlLaw::Constant(vec![singular_control(params)]),
        ProblemCase::Two => {
            ControlLaw::StateCostateFeedback(Arc::new(move |x, p, _t| vec![singular_feedback(&k, x, p)]))
        }
    };
    let bx = |j, law| ControlPhase::with_box(j, law, vec![0.0], vec![1.0]);
    ProblemDef {
        name: match params.case {
            ProblemCase::One => "catalyst1".into(),
            ProblemCase::Two => "catalyst2".into(),
        },
        x0: vec![1.0, 0.0],
        horizon: Horizon::Fixed(params.t_final),
        case: params.case,
        phases: vec![
            bx(0, ControlLaw::Constant(vec![1.0])),
            bx(1, singular),
            bx(2, ControlLaw::Constant(vec![0.0])),
        ],
        dynamics: Arc::new(k),
        case2_derivs: (params.case == ProblemCase::Two)
            .then(|| case2_derivatives(k, [Some(1.0), None, Some(0.0)])),
    }
}

/// Analytic switch times; the optimal objective is tabulated for the
/// standard rate constants at `T ∈ {1, 4, 12}`.
pub fn reference(params: &CatalystParams) -> ReferenceSolution {
    let alpha = (params.k3 / params.k2).sqrt();
    let beta = params.k1 / params.k2;
    let s1 = ((1.0 + alpha + beta) / alpha).ln() / (params.k2 * (1.0 + beta));
    let s2 = params.t_final - (1.0 + alpha).ln() / params.k3;
    let standard = params.k1 == 1.0 && params.k2 == 10.0 && params.k3 == 1.0;
    let c_star = if !standard {
        None
    } else if params.t_final == 1.0 {
        Some(-0.048055685860877)
    } else if params.t_final == 4.0 {
        Some(-0.191814356325161)
    } else if params.t_final == 12.0 {
        Some(-0.477712020050041)
    } else {
        None
    };
    ReferenceSolution {
        s_star: vec![s1, s2],
        t_star: None,
        c_star,
        u_sing: Some(format!("{:.15}", singular_control(params))),
    }
}

/// One-digit starting guess `(0.1, T − 0.3)`; Case 2 adds `p₀ = (0.9, 0.8)`.
pub fn default_start(params: &CatalystParams) -> SwitchConfig {
    let cfg = SwitchConfig::new(vec![0.1, params.t_final - 0.3]);
    match params.case {
        ProblemCase::One => cfg,
        ProblemCase::Two => cfg.with_p0(vec![0.9, 0.8]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_value() {
        let u = singular_control(&CatalystParams::default());
        assert!((u - 0.227142082708498).abs() < 1e-15);
    }

    #[test]
    fn reference_switch_times() {
        let r = reference(&CatalystParams {
            t_final: 4.0,
            ..Default::default()
        });
        assert!((r.s_star[0] - 0.136299034594555).abs() < 1e-14);
        assert!((r.s_star[1] - (4.0 - 0.274769892408345)).abs() < 1e-14);
        assert_eq!(r.c_star, Some(-0.191814356325161));
    }

    #[test]
    fn bang_phase_rates() {
        let prob = build(&CatalystParams::default());
        let f = prob.phase_dynamics(0, 0.0, &[1.0, 0.0], None).unwrap();
        assert_eq!(f, vec![-1.0, 1.0]);
    }

    #[test]
    fn singular_phase_margins() {
        let prob = build(&CatalystParams::default());
        let m = prob.control_feasibility(1, 0.5, &[0.5, 0.1], None).unwrap();
        assert!((m[0] - 0.227142082708498).abs() < 1e-15);
        let m = prob.control_feasibility(0, 0.0, &[1.0, 0.0], None).unwrap();
        assert_eq!(m[0], 0.0);
    }

    #[test]
    fn feedback_gradient_matches_differences() {
        let k = Catalyst { k1: 1.0, k2: 10.0, k3: 1.0 };
        let (x, p) = ([0.6, 0.07], [0.95, 0.9]);
        let (dx, dp) = feedback_gradient(&k, &x, &p);
        let h = 1e-7;
        for i in 0..2 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (singular_feedback(&k, &xp, &p) - singular_feedback(&k, &xm, &p)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6 * fd.abs().max(1.0));
            let mut pp = p;
            pp[i] += h;
            let mut pm = p;
            pm[i] -= h;
            let fd = (singular_feedback(&k, &x, &pp) - singular_feedback(&k, &x, &pm)) / (2.0 * h);
            assert!((fd - dp[i]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}
