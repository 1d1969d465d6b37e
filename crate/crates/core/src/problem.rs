//! Multi-phase control problems: dynamics, objective, and one feedback law
//! per phase between consecutive switch points.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Default relative step for central finite differences.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Control-dependent dynamics `ẋ = f(x, u)` and a terminal objective `C(x(T))`.
///
/// Jacobians are `n×n` (`∇ₓf`) and `n×m` (`∇ᵤf`); the objective gradient is
/// returned as a row (plain slice of length `n`).
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    fn jac_x(&self, x: &[f64], u: &[f64]) -> Matrix;
    fn jac_u(&self, x: &[f64], u: &[f64]) -> Matrix;
    fn objective(&self, x: &[f64]) -> f64;
    fn objective_grad(&self, x: &[f64]) -> Vec<f64>;
}

pub type StateLawFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
/// `m×n` Jacobian of a state-feedback law with respect to `x`.
pub type StateLawJacobianFn = Arc<dyn Fn(&[f64], f64) -> Matrix + Send + Sync>;
pub type CostateLawFn = Arc<dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync>;
pub type BoundFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Analytic `(∇ₓ𝓗_j, ∇ₚ𝓗_j)` for the generalized Hamiltonian
/// `𝓗_j = y₁ f_j − p f_{jx} y₂ᵀ`.
pub type Case2DerivativesFn =
    Arc<dyn Fn(usize, f64, &GeneralizedArgs<'_>) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

#[derive(Debug, Clone, Copy)]
pub struct GeneralizedArgs<'a> {
    pub x: &'a [f64],
    pub p: &'a [f64],
    pub y1: &'a [f64],
    pub y2: &'a [f64],
}

#[derive(Clone)]
pub enum ControlLaw {
    Constant(Vec<f64>),
    StateFeedback {
        law: StateLawFn,
        jacobian: Option<StateLawJacobianFn>,
    },
    StateCostateFeedback(CostateLawFn),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    ConstantVector,
    StateFeedback,
    StateCostateFeedback,
}

impl ControlLaw {
    pub fn kind(&self) -> LawKind {
        match self {
            ControlLaw::Constant(_) => LawKind::ConstantVector,
            ControlLaw::StateFeedback { .. } => LawKind::StateFeedback,
            ControlLaw::StateCostateFeedback(_) => LawKind::StateCostateFeedback,
        }
    }

    pub fn needs_costate(&self) -> bool {
        matches!(self, ControlLaw::StateCostateFeedback(_))
    }
}

impl fmt::Debug for ControlLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlLaw::Constant(u) => f.debug_tuple("Constant").field(u).finish(),
            ControlLaw::StateFeedback { jacobian, .. } => f
                .debug_struct("StateFeedback")
                .field("analytic_jacobian", &jacobian.is_some())
                .finish(),
            ControlLaw::StateCostateFeedback(_) => f.write_str("StateCostateFeedback"),
        }
    }
}

#[derive(Clone)]
pub struct ControlPhase {
    pub index: usize,
    pub law: ControlLaw,
    pub lower: BoundFn,
    pub upper: BoundFn,
}

impl ControlPhase {
    /// Phase with a time-invariant box `[lower, upper]`.
    pub fn with_box(index: usize, law: ControlLaw, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            index,
            law,
            lower: Arc::new(move |_| lower.clone()),
            upper: Arc::new(move |_| upper.clone()),
        }
    }
}

impl fmt::Debug for ControlPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlPhase")
            .field("index", &self.index)
            .field("law", &self.law)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    Fixed(f64),
    Free { guess: f64 },
}

impl Horizon {
    pub fn is_free(&self) -> bool {
        matches!(self, Horizon::Free { .. })
    }

    /// Fixed horizon, or the initial guess of a free one.
    pub fn nominal(&self) -> f64 {
        match *self {
            Horizon::Fixed(t) => t,
            Horizon::Free { guess } => guess,
        }
    }
}

/// Case 1: every phase law is independent of the costate.
/// Case 2: the generalized state `(x, p)` is integrated from a free `p₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemCase {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

#[derive(Clone)]
pub struct ProblemDef {
    pub name: String,
    pub x0: Vec<f64>,
    pub horizon: Horizon,
    pub case: ProblemCase,
    pub phases: Vec<ControlPhase>,
    pub dynamics: Arc<dyn Dynamics>,
    pub case2_derivs: Option<Case2DerivativesFn>,
}

impl fmt::Debug for ProblemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemDef")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("case", &self.case)
            .field("phases", &self.phases)
            .field("analytic_case2_derivs", &self.case2_derivs.is_some())
            .finish()
    }
}

/// The decision vector: ordered switch points (time units), the initial
/// costate in Case 2, and the terminal time when it is free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchConfig {
    pub s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
}

impl SwitchConfig {
    pub fn new(s: Vec<f64>) -> Self {
        Self {
            s,
            p0: None,
            t_final: None,
        }
    }

    pub fn with_p0(mut self, p0: Vec<f64>) -> Self {
        self.p0 = Some(p0);
        self
    }

    pub fn with_t_final(mut self, t: f64) -> Self {
        self.t_final = Some(t);
        self
    }
}

/// Default minimum switch separation: `1e-6·T`.
pub fn default_min_gap(horizon: f64) -> f64 {
    1e-6 * horizon
}

impl ProblemDef {
    pub fn n(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn m(&self) -> usize {
        self.dynamics.control_dim()
    }

    pub fn switch_count(&self) -> usize {
        self.phases.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if self.x0.len() != n {
            return Err(Error::InvalidConfig(format!(
                "{}: x0 has length {}, expected {n}",
                self.name,
                self.x0.len()
            )));
        }
        if self.phases.is_empty() {
            return Err(Error::InvalidConfig(format!("{}: no phases", self.name)));
        }
        if !(self.horizon.nominal() > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{}: horizon must be positive",
                self.name
            )));
        }
        for (j, ph) in self.phases.iter().enumerate() {
            if ph.index != j {
                return Err(Error::InvalidConfig(format!(
                    "{}: phase {j} carries index {}",
                    self.name, ph.index
                )));
            }
            if let ControlLaw::Constant(u) = &ph.law {
                if u.len() != m {
                    return Err(Error::InvalidConfig(format!(
                        "{}: constant control of phase {j} has length {}, expected {m}",
                        self.name,
                        u.len()
                    )));
                }
            }
            if self.case == ProblemCase::One && ph.law.needs_costate() {
                return Err(Error::InvalidConfig(format!(
                    "{}: phase {j} depends on the costate in a Case-1 problem",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Same problem treated as Case 2 (costate integrated forward from `p₀`),
    /// with analytic generalized-Hamiltonian derivatives dropped.
    pub fn as_case2(&self) -> ProblemDef {
        ProblemDef {
            name: format!("{}-case2", self.name),
            case: ProblemCase::Two,
            case2_derivs: None,
            ..self.clone()
        }
    }

    fn phase(&self, j: usize) -> Result<&ControlPhase> {
        self.phases.get(j).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "{}: phase index {j} out of range 0..{}",
                self.name,
                self.phases.len()
            ))
        })
    }

    /// `φ_j(x, t)` or `φ_j(x, p, t)`.
    pub fn phase_control(&self, j: usize, t: f64, x: &[f64], p: Option<&[f64]>) -> Result<Vec<f64>> {
        match &self.phase(j)?.law {
            ControlLaw::Constant(u) => Ok(u.clone()),
            ControlLaw::StateFeedback { law, .. } => Ok(law(x, t)),
            ControlLaw::StateCostateFeedback(law) => match p {
                Some(p) => Ok(law(x, p, t)),
                None => Err(Error::MissingCostate { phase: j }),
            },
        }
    }

    /// `f_j = f(x, φ_j(·))`.
    pub fn phase_dynamics(&self, j: usize, t: f64, x: &[f64], p: Option<&[f64]>) -> Result<Vec<f64>> {
        let u = self.phase_control(j, t, x, p)?;
        Ok(self.dynamics.rhs(x, &u))
    }

    /// Componentwise `min(u − α(t), β(t) − u)`; negative entries mean the
    /// law leaves the box. Reported, never enforced.
    pub fn control_feasibility(
        &self,
        j: usize,
        t: f64,
        x: &[f64],
        p: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let ph = self.phase(j)?;
        let u = self.phase_control(j, t, x, p)?;
        let (lo, hi) = ((ph.lower)(t), (ph.upper)(t));
        Ok(u
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(&ui, (&a, &b))| (ui - a).min(b - ui))
            .collect())
    }

    /// `∇ₓF_j = ∇ₓf + ∇ᵤf·∇ₓφ_j` for a costate-independent law.
    pub fn phase_state_jacobian(&self, j: usize, t: f64, x: &[f64], h_fd: f64) -> Result<Matrix> {
        let ph = self.phase(j)?;
        match &ph.law {
            ControlLaw::Constant(u) => Ok(self.dynamics.jac_x(x, u)),
            ControlLaw::StateFeedback { law, jacobian } => {
                let u = law(x, t);
                let dphi = match jacobian {
                    Some(jac) => jac(x, t),
                    None => fd_law_jacobian(law.as_ref(), x, t, h_fd),
                };
                Ok(self.dynamics.jac_x(x, &u) + self.dynamics.jac_u(x, &u) * dphi)
            }
            ControlLaw::StateCostateFeedback(_) => Err(Error::MissingCostate { phase: j }),
        }
    }

    /// `𝓗_j(x, p, y, t) = y₁ f_j − p f_{jx} y₂ᵀ`, with `f_{jx} = ∇ₓf` at `u = φ_j`.
    pub fn generalized_hamiltonian(&self, j: usize, t: f64, a: &GeneralizedArgs<'_>) -> Result<f64> {
        let u = self.phase_control(j, t, a.x, Some(a.p))?;
        let f = self.dynamics.rhs(a.x, &u);
        let fx = self.dynamics.jac_x(a.x, &u);
        let mut h = dot(a.y1, &f);
        let n = a.x.len();
        for r in 0..n {
            let mut row = 0.0;
            for c in 0..n {
                row += fx[(r, c)] * a.y2[c];
            }
            h -= a.p[r] * row;
        }
        Ok(h)
    }

    /// Central finite differences of `𝓗_j` with respect to `x` and `p`,
    /// step `h_fd·max(1, |component|)`.
    pub fn numeric_case2_derivs(
        &self,
        j: usize,
        t: f64,
        a: &GeneralizedArgs<'_>,
        h_fd: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = a.x.len();
        let mut gx = vec![0.0; n];
        let mut gp = vec![0.0; n];
        let mut x = a.x.to_vec();
        let mut p = a.p.to_vec();
        for i in 0..n {
            let step = h_fd * x[i].abs().max(1.0);
            let orig = x[i];
            x[i] = orig + step;
            let hp = self.generalized_hamiltonian(j, t, &GeneralizedArgs { x: &x, ..*a })?;
            x[i] = orig - step;
            let hm = self.generalized_hamiltonian(j, t, &GeneralizedArgs { x: &x, ..*a })?;
            x[i] = orig;
            gx[i] = (hp - hm) / (2.0 * step);
        }
        for i in 0..n {
            let step = h_fd * p[i].abs().max(1.0);
            let orig = p[i];
            p[i] = orig + step;
            let hp = self.generalized_hamiltonian(j, t, &GeneralizedArgs { p: &p, ..*a })?;
            p[i] = orig - step;
            let hm = self.generalized_hamiltonian(j, t, &GeneralizedArgs { p: &p, ..*a })?;
            p[i] = orig;
            gp[i] = (hp - hm) / (2.0 * step);
        }
        if gx.iter().chain(&gp).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDerivative { phase: j, t });
        }
        Ok((gx, gp))
    }

    /// Analytic generalized-Hamiltonian gradients when supplied, else finite
    /// differences. The flag reports which path was taken.
    pub fn case2_derivs(
        &self,
        j: usize,
        t: f64,
        a: &GeneralizedArgs<'_>,
        h_fd: f64,
    ) -> Result<(Vec<f64>, Vec<f64>, DerivativeSource)> {
        match &self.case2_derivs {
            Some(d) => {
                let (gx, gp) = d(j, t, a);
                Ok((gx, gp, DerivativeSource::Analytic))
            }
            None => {
                let (gx, gp) = self.numeric_case2_derivs(j, t, a, h_fd)?;
                Ok((gx, gp, DerivativeSource::FiniteDifference))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeSource {
    Analytic,
    FiniteDifference,
}

fn fd_law_jacobian(law: &(dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync), x: &[f64], t: f64, h_fd: f64) -> Matrix {
    let n = x.len();
    let m = law(x, t).len();
    let mut jac = Matrix::zeros(m, n);
    let mut xx = x.to_vec();
    for c in 0..n {
        let step = h_fd * x[c].abs().max(1.0);
        xx[c] = x[c] + step;
        let up = law(&xx, t);
        xx[c] = x[c] - step;
        let dn = law(&xx, t);
        xx[c] = x[c];
        for r in 0..m {
            jac[(r, c)] = (up[r] - dn[r]) / (2.0 * step);
        }
    }
    jac
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row vector times matrix: `(p M)_c = Σ_r p_r M_rc`.
pub(crate) fn row_times(p: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.ncols())
        .map(|c| (0..m.nrows()).map(|r| p[r] * m[(r, c)]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ẋ = A x + B u with constant A, B and C = c·x.
    struct Linear;

    impl Dynamics for Linear {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn rhs(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
            vec![0.5 * x[0] - x[1] + u[0], 2.0 * x[0] + 0.25 * x[1] - 3.0 * u[0]]
        }
        fn jac_x(&self, _: &[f64], _: &[f64]) -> Matrix {
            Matrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25])
        }
        fn jac_u(&self, _: &[f64], _: &[f64]) -> Matrix {
            Matrix::from_row_slice(2, 1, &[1.0, -3.0])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0] - 2.0 * x[1]
        }
        fn objective_grad(&self, _: &[f64]) -> Vec<f64> {
            vec![1.0, -2.0]
        }
    }

    fn linear_problem(case: ProblemCase, law: ControlLaw) -> ProblemDef {
        ProblemDef {
            name: "linear".into(),
            x0: vec![1.0, 0.0],
            horizon: Horizon::Fixed(1.0),
            case,
            phases: vec![
                ControlPhase::with_box(0, ControlLaw::Constant(vec![1.0]), vec![-1.0], vec![1.0]),
                ControlPhase::with_box(1, law, vec![-1.0], vec![1.0]),
            ],
            dynamics: Arc::new(Linear),
            case2_derivs: None,
        }
    }

    #[test]
    fn constant_law_composes_with_dynamics() {
        let prob = linear_problem(ProblemCase::One, ControlLaw::Constant(vec![0.2]));
        for x in [[0.0, 0.0], [1.5, -2.0], [-3.0, 7.0]] {
            let fj = prob.phase_dynamics(1, 0.3, &x, None).unwrap();
            assert_eq!(fj, prob.dynamics.rhs(&x, &[0.2]));
        }
    }

    #[test]
    fn costate_law_without_costate_is_an_error() {
        let law = ControlLaw::StateCostateFeedback(Arc::new(|_, p: &[f64], _| vec![p[0]]));
        let prob = linear_problem(ProblemCase::Two, law);
        assert!(matches!(
            prob.phase_dynamics(1, 0.0, &[1.0, 1.0], None),
            Err(Error::MissingCostate { phase: 1 })
        ));
        assert!(prob.phase_dynamics(1, 0.0, &[1.0, 1.0], Some(&[0.5, 0.0])).is_ok());
    }

    #[test]
    fn case1_problem_rejects_costate_law() {
        let law = ControlLaw::StateCostateFeedback(Arc::new(|_, p: &[f64], _| vec![p[0]]));
        assert!(linear_problem(ProblemCase::One, law).validate().is_err());
    }

    #[test]
    fn feasibility_margins() {
        let prob = linear_problem(ProblemCase::One, ControlLaw::Constant(vec![0.25]));
        assert_eq!(prob.control_feasibility(0, 0.0, &[0.0, 0.0], None).unwrap(), vec![0.0]);
        assert_eq!(prob.control_feasibility(1, 0.0, &[0.0, 0.0], None).unwrap(), vec![0.75]);
    }

    #[test]
    fn fd_on_linear_hamiltonian_is_exact_to_roundoff() {
        // f linear in x and φ independent of x: ∇ₓ𝓗 = y₁A, ∇ₚ𝓗 = −(A y₂ᵀ)ᵀ.
        let law = ControlLaw::StateCostateFeedback(Arc::new(|_, p: &[f64], _| vec![0.3 * p[1]]));
        let prob = linear_problem(ProblemCase::Two, law);
        let (x, p, y1, y2) = ([0.4, -1.2], [0.7, 0.1], [1.0, 2.0], [-0.5, 0.3]);
        let a = GeneralizedArgs { x: &x, p: &p, y1: &y1, y2: &y2 };
        let (gx, gp) = prob.numeric_case2_derivs(1, 0.0, &a, DEFAULT_FD_STEP).unwrap();
        let amat = prob.dynamics.jac_x(&x, &[0.0]);
        let expect_x = row_times(&y1, &amat);
        for i in 0..2 {
            assert!((gx[i] - expect_x[i]).abs() < 1e-9, "{gx:?} vs {expect_x:?}");
        }
        // ∂/∂p of y₁ B φ(p) − p A y₂ᵀ with φ = 0.3 p₂.
        let ay2 = [0.5 * y2[0] - y2[1], 2.0 * y2[0] + 0.25 * y2[1]];
        let y1b = y1[0] * 1.0 + y1[1] * -3.0;
        let expect_p = [-ay2[0], 0.3 * y1b - ay2[1]];
        for i in 0..2 {
            assert!((gp[i] - expect_p[i]).abs() < 1e-9, "{gp:?} vs {expect_p:?}");
        }
    }

    #[test]
    fn zero_adjoint_gives_zero_gradients() {
        let law = ControlLaw::StateCostateFeedback(Arc::new(|x: &[f64], p: &[f64], _| {
            vec![(x[0] * p[1]).sin()]
        }));
        let prob = linear_problem(ProblemCase::Two, law);
        let z = [0.0, 0.0];
        let a = GeneralizedArgs { x: &[0.3, 0.9], p: &[1.1, -0.4], y1: &z, y2: &z };
        let (gx, gp) = prob.numeric_case2_derivs(1, 0.5, &a, DEFAULT_FD_STEP).unwrap();
        assert!(gx.iter().chain(&gp).all(|&v| v == 0.0));
    }

    #[test]
    fn state_jacobian_uses_chain_rule() {
        let law = ControlLaw::StateFeedback {
            law: Arc::new(|x: &[f64], _| vec![x[0] * x[1]]),
            jacobian: None,
        };
        let prob = linear_problem(ProblemCase::One, law);
        let x = [0.6, -0.2];
        let jac = prob.phase_state_jacobian(1, 0.0, &x, DEFAULT_FD_STEP).unwrap();
        // A + B [x1, x0]
        let expect = [0.5 + x[1], -1.0 + x[0], 2.0 - 3.0 * x[1], 0.25 - 3.0 * x[0]];
        for (k, e) in expect.iter().enumerate() {
            assert!((jac[(k / 2, k % 2)] - e).abs() < 1e-9);
        }
    }
}
