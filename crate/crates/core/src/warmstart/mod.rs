//! Starting guesses from a TV-regularized Euler discretization.
//!
//! The discretized problem `min C(x_N) + ρ Σ_i Σ_j |u_{i,j} − u_{i,j−1}|`
//! with `x_{j+1} = x_j + h f(x_j, u_j)` is solved by proximal gradient: the
//! smooth part is differentiated by the discrete adjoint recursion, the TV
//! term is handled by an exact 1-D prox per control channel, and the result
//! is clipped to the control box. Jumps in the converged control give the
//! switch points; the adjoint at the first node estimates `p(0)`.

mod tv;

pub use tv::{total_variation, tv_prox};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{dot, row_times, ProblemDef, SwitchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvSettings {
    pub n_intervals: usize,
    pub rho_tv: f64,
    pub max_iters: usize,
    /// Stop when `|F_{k+1} − F_k| ≤ rel_tol·max(1, |F_k|)`.
    pub rel_tol: f64,
    /// Horizon; `None` uses the problem's fixed `T` or free-time guess.
    pub horizon: Option<f64>,
}

impl Default for TvSettings {
    fn default() -> Self {
        Self {
            n_intervals: 100,
            rho_tv: 1e-3,
            max_iters: 20_000,
            rel_tol: 1e-8,
            horizon: None,
        }
    }
}

/// The discretized problem at the returned iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteControlProblem {
    pub n_intervals: usize,
    pub h: f64,
    pub t_final: f64,
    pub rho_tv: f64,
    /// `u[j]` is the control vector on `[t_j, t_{j+1})`.
    pub u: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    /// `C(x_N)` at the iterate.
    pub terminal_cost: f64,
    /// Regularized objective `C(x_N) + ρ·TV(u)`.
    pub objective: f64,
    /// Adjoint `p₀` of the discrete recursion.
    pub p0: Vec<f64>,
    pub iterations: usize,
    /// `false` when `max_iters` was reached first; the best iterate is kept.
    pub converged: bool,
    /// Regularized objective after every accepted step.
    pub history: Vec<f64>,
}

impl DiscreteControlProblem {
    pub fn node_time(&self, j: usize) -> f64 {
        j as f64 * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    BangLow,
    BangHigh,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureEstimate {
    pub switch_times: Vec<f64>,
    pub phase_kinds: Vec<PhaseKind>,
    pub p0_estimate: Vec<f64>,
    pub t_final: f64,
    /// `(t_j, u_j)` of the converged discrete control.
    pub u_profile: Vec<(f64, Vec<f64>)>,
    /// More jumps than the caller's expected count (still `≤ k_max`).
    #[serde(default)]
    pub flagged: bool,
}

impl StructureEstimate {
    /// Starting point for the switch-point solver. The costate estimate is
    /// attached only for Case-2 problems.
    pub fn to_config(&self, prob: &ProblemDef) -> SwitchConfig {
        let mut cfg = SwitchConfig::new(self.switch_times.clone());
        if prob.case == crate::problem::ProblemCase::Two {
            cfg.p0 = Some(self.p0_estimate.clone());
        }
        if prob.horizon.is_free() {
            cfg.t_final = Some(self.t_final);
        }
        cfg
    }
}

struct Discretization<'a> {
    prob: &'a ProblemDef,
    n: usize,
    h: f64,
}

impl Discretization<'_> {
    fn rollout(&self, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let dynamics = &self.prob.dynamics;
        let mut xs = Vec::with_capacity(self.n + 1);
        xs.push(self.prob.x0.clone());
        for uj in u {
            let x = xs.last().unwrap();
            let f = dynamics.rhs(x, uj);
            xs.push(x.iter().zip(&f).map(|(a, b)| a + self.h * b).collect());
        }
        xs
    }

    fn cost(&self, u: &[Vec<f64>]) -> f64 {
        self.prob.dynamics.objective(self.rollout(u).last().unwrap())
    }

    /// `(C(x_N), ∂C/∂u_j for all j, p₀)`.
    fn cost_and_gradient(&self, u: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
        let dynamics = &self.prob.dynamics;
        let xs = self.rollout(u);
        let cost = dynamics.objective(&xs[self.n]);
        // p_j multiplies the constraint x_{j+1} = x_j + h f(x_j, u_j)
        let mut p = dynamics.objective_grad(&xs[self.n]);
        let mut grad = vec![Vec::new(); self.n];
        for j in (0..self.n).rev() {
            let (x, uj) = (&xs[j], &u[j]);
            grad[j] = row_times(&p, &dynamics.jac_u(x, uj))
                .into_iter()
                .map(|g| self.h * g)
                .collect();
            if j > 0 {
                let px = row_times(&p, &dynamics.jac_x(x, uj));
                p.iter_mut().zip(px).for_each(|(pi, v)| *pi += self.h * v);
            }
        }
        (cost, grad, p)
    }
}

fn tv_term(u: &[Vec<f64>], m: usize) -> f64 {
    (0..m)
        .map(|i| total_variation(&u.iter().map(|uj| uj[i]).collect::<Vec<_>>()))
        .sum()
}

fn flat_dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot(x, y)).sum()
}

/// Largest Hessian eigenvalue of the smooth part, by power iteration with
/// central-difference Hessian-vector products.
fn lipschitz_estimate(d: &Discretization<'_>, u: &[Vec<f64>]) -> f64 {
    let m = u[0].len();
    let mut v: Vec<Vec<f64>> = (0..d.n)
        .map(|j| (0..m).map(|i| 1.0 + 0.1 * ((j * m + i) as f64).sin()).collect())
        .collect();
    let mut lambda = 0.0;
    for _ in 0..30 {
        let norm = flat_dot(&v, &v).sqrt();
        v.iter_mut().flatten().for_each(|x| *x /= norm);
        let eps = 1e-4;
        let shift = |s: f64| -> Vec<Vec<f64>> {
            u.iter()
                .zip(&v)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                .collect()
        };
        let (_, gp, _) = d.cost_and_gradient(&shift(eps));
        let (_, gm, _) = d.cost_and_gradient(&shift(-eps));
        let hv: Vec<Vec<f64>> = gp
            .iter()
            .zip(&gm)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) / (2.0 * eps)).collect())
            .collect();
        let next = flat_dot(&hv, &hv).sqrt();
        let converged = (next - lambda).abs() <= 1e-3 * next;
        lambda = next;
        if lambda == 0.0 || converged {
            break;
        }
        v = hv;
    }
    lambda.max(f64::EPSILON)
}

/// Proximal-gradient solve of the TV-regularized Euler discretization,
/// started from the box midpoint.
///
/// Steps are `u⁺ = clip(prox_{tρ}(u − t∇C))` with `t` backtracked from
/// `1/L̂` until the quadratic upper model holds and the regularized
/// objective does not increase.
pub fn solve_tv_euler(prob: &ProblemDef, settings: &TvSettings) -> Result<DiscreteControlProblem> {
    prob.validate()?;
    let n = settings.n_intervals;
    if n < 2 || !(settings.rho_tv >= 0.0) || settings.max_iters == 0 {
        return Err(Error::InvalidConfig(format!(
            "TV warm start needs N >= 2, rho_tv >= 0, max_iters >= 1 (got {settings:?})"
        )));
    }
    let t_final = settings.horizon.unwrap_or_else(|| prob.horizon.nominal());
    let h = t_final / n as f64;
    let m = prob.m();
    // no phase is assigned yet; use the hull of all phase boxes
    let hull = |t: f64| -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        for ph in &prob.phases {
            for (i, (a, b)) in (ph.lower)(t).into_iter().zip((ph.upper)(t)).enumerate() {
                lo[i] = lo[i].min(a);
                hi[i] = hi[i].max(b);
            }
        }
        (lo, hi)
    };
    let (lower, upper): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..n).map(|j| hull(j as f64 * h)).unzip();
    if lower.iter().flatten().chain(upper.iter().flatten()).any(|b| !b.is_finite()) {
        return Err(Error::InvalidConfig("TV warm start needs a finite control box".into()));
    }
    let clip = |u: &mut [Vec<f64>]| {
        for (j, uj) in u.iter_mut().enumerate() {
            for i in 0..m {
                uj[i] = uj[i].clamp(lower[j][i], upper[j][i]);
            }
        }
    };
    let d = Discretization { prob, n, h };
    let rho = settings.rho_tv;

    let mut u: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| 0.5 * (lower[j][i] + upper[j][i])).collect())
        .collect();
    let l_hat = lipschitz_estimate(&d, &u);
    let mut step = 1.0 / l_hat;
    let (mut cost, mut grad, mut p0) = d.cost_and_gradient(&u);
    let mut obj = cost + rho * tv_term(&u, m);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iters {
        iterations += 1;
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let mut cand: Vec<Vec<f64>> = u
                .iter()
                .zip(&grad)
                .map(|(a, g)| a.iter().zip(g).map(|(x, y)| x - t * y).collect())
                .collect();
            for i in 0..m {
                let channel: Vec<f64> = cand.iter().map(|c| c[i]).collect();
                for (c, z) in cand.iter_mut().zip(tv_prox(&channel, t * rho)) {
                    c[i] = z;
                }
            }
            clip(&mut cand);
            let diff: Vec<Vec<f64>> = cand
                .iter()
                .zip(&u)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            let c_new = d.cost(&cand);
            let model = cost + flat_dot(&grad, &diff) + flat_dot(&diff, &diff) / (2.0 * t);
            let obj_new = c_new + rho * tv_term(&cand, m);
            if c_new.is_finite() && c_new <= model + 1e-15 * cost.abs() && obj_new <= obj {
                accepted = Some((cand, obj_new));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, obj_new)) = accepted else {
            // no further decrease is resolvable
            converged = true;
            break;
        };
        let change = (obj - obj_new).abs();
        u = cand;
        (cost, grad, p0) = d.cost_and_gradient(&u);
        obj = obj_new;
        history.push(obj);
        // allow the step to grow back after a backtrack
        step = (t * 2.0).min(1.0 / l_hat * 64.0);
        if change <= settings.rel_tol * obj.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("TV warm start stopped after {iterations} iterations without meeting rel_tol");
    }
    Ok(DiscreteControlProblem {
        n_intervals: n,
        h,
        t_final,
        rho_tv: rho,
        u,
        lower,
        upper,
        terminal_cost: cost,
        objective: obj,
        p0,
        iterations,
        converged,
        history,
    })
}

/// Default maximum number of detected jumps before the structure is
/// declared unusable.
pub const DEFAULT_K_MAX: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectSettings {
    /// Jump threshold as a fraction of `β − α`, channelwise.
    pub jump_frac: f64,
    /// Bound proximity as a fraction of `β − α`.
    pub bound_frac: f64,
    pub k_max: usize,
    /// Expected number of switches; more (up to `k_max`) sets `flagged`.
    pub expected: Option<usize>,
}

impl Default for DetectSettings {
    fn default() -> Self {
        Self {
            jump_frac: 0.1,
            bound_frac: 0.05,
            k_max: DEFAULT_K_MAX,
            expected: None,
        }
    }
}

/// Switches at mesh-edge midpoints `(j + ½)h` where `‖u_{j+1} − u_j‖`
/// exceeds the jump threshold in some channel; each segment is classified
/// by its mean control.
pub fn detect_structure(dcp: &DiscreteControlProblem, settings: &DetectSettings) -> Result<StructureEstimate> {
    let n = dcp.n_intervals;
    let m = dcp.u[0].len();
    let width = |j: usize, i: usize| dcp.upper[j][i] - dcp.lower[j][i];
    let mut edges = Vec::new();
    for j in 0..n - 1 {
        let jump = (0..m).any(|i| (dcp.u[j + 1][i] - dcp.u[j][i]).abs() > settings.jump_frac * width(j, i));
        if jump {
            edges.push(j);
        }
    }
    let u_profile: Vec<(f64, Vec<f64>)> = dcp
        .u
        .iter()
        .enumerate()
        .map(|(j, u)| (dcp.node_time(j), u.clone()))
        .collect();
    if edges.is_empty() || edges.len() > settings.k_max {
        let tv: f64 = tv_term(&dcp.u, m);
        return Err(Error::NoStructure(format!(
            "{} jumps above {} of the control range (allowed 1..={}); control total variation {tv:.3e} \
             over N = {n}{}",
            edges.len(),
            settings.jump_frac,
            settings.k_max,
            if edges.len() > settings.k_max {
                ", the control oscillates; increase rho_tv"
            } else {
                ""
            }
        )));
    }
    let switch_times: Vec<f64> = edges.iter().map(|&j| (j as f64 + 0.5) * dcp.h).collect();
    let mut bounds = vec![0];
    bounds.extend(edges.iter().map(|j| j + 1));
    bounds.push(n);
    let phase_kinds = bounds
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let len = (b - a) as f64;
            let near = |pick: &dyn Fn(usize, usize) -> f64| {
                (0..m).all(|i| {
                    let mean_u = (a..b).map(|j| dcp.u[j][i]).sum::<f64>() / len;
                    let mean_b = (a..b).map(|j| pick(j, i)).sum::<f64>() / len;
                    let mean_w = (a..b).map(|j| width(j, i)).sum::<f64>() / len;
                    (mean_u - mean_b).abs() <= settings.bound_frac * mean_w
                })
            };
            if near(&|j, i| dcp.lower[j][i]) {
                PhaseKind::BangLow
            } else if near(&|j, i| dcp.upper[j][i]) {
                PhaseKind::BangHigh
            } else {
                PhaseKind::Singular
            }
        })
        .collect();
    Ok(StructureEstimate {
        flagged: settings.expected.is_some_and(|k| edges.len() > k),
        switch_times,
        phase_kinds,
        p0_estimate: dcp.p0.clone(),
        t_final: dcp.t_final,
        u_profile,
    })
}
