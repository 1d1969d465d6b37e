//! Minimization of the objective over switch points, initial costate, and
//! terminal time: projected L-BFGS on the ordered-switch polytope, a secant
//! root-finder for single-switch problems, and derivative profiles.

mod projection;
mod secant;

pub use projection::{isotonic_regression, project_chain, project_ordered};
pub use secant::{derivative_profile, secant_switch, ProfilePoint, RootKind, SecantOutcome, SecantStep};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{evaluate_at, resolve_horizon, EvalSettings, GradientBundle};
use crate::problem::{default_min_gap, ProblemCase, ProblemDef, SwitchConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSettings {
    /// Bound on `‖P(z − ∇C) − z‖∞`.
    pub stat_tol: f64,
    pub max_iters: usize,
    pub ls_shrink: f64,
    pub ls_c1: f64,
    pub memory: usize,
    /// Minimum switch separation; `None` means `1e-6·T₀`.
    pub eps_gap: Option<f64>,
    pub eval: EvalSettings,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        Self {
            stat_tol: 1e-8,
            max_iters: 200,
            ls_shrink: 0.5,
            ls_c1: 1e-4,
            memory: 5,
            eps_gap: None,
            eval: EvalSettings::default(),
        }
    }
}

impl OptimizeSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ls_shrink > 0.0
            && self.ls_shrink < 1.0
            && self.ls_c1 > 0.0
            && self.ls_c1 < 0.5
            && self.stat_tol > 0.0
            && self.memory >= 1
            && self.eps_gap.is_none_or(|g| g >= 0.0);
        if ok {
            self.eval.ode.validate()
        } else {
            Err(Error::InvalidConfig(format!("bad optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub stationarity: f64,
    pub step: f64,
}

/// Absolute errors against a reference solution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceErrors {
    pub s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub method: String,
    pub final_cfg: SwitchConfig,
    pub objective: f64,
    pub iterations: usize,
    pub gradient_evals: usize,
    pub converged: bool,
    pub stationarity: f64,
    pub worst_margin: f64,
    pub gradient: GradientBundle,
    pub trace: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_errors: Option<ReferenceErrors>,
}

/// Packing of `(s, p₀, T)` into one vector; `s` and `T` form the chain.
#[derive(Debug, Clone, Copy)]
struct Layout {
    k: usize,
    np: usize,
    free_t: bool,
}

impl Layout {
    fn of(prob: &ProblemDef) -> Self {
        Self {
            k: prob.switch_count(),
            np: if prob.case == ProblemCase::Two { prob.n() } else { 0 },
            free_t: prob.horizon.is_free(),
        }
    }

    fn pack(&self, cfg: &SwitchConfig, t: f64) -> Vec<f64> {
        let mut z = cfg.s.clone();
        if self.np > 0 {
            z.extend_from_slice(cfg.p0.as_deref().unwrap_or(&[]));
        }
        if self.free_t {
            z.push(t);
        }
        z
    }

    fn unpack(&self, z: &[f64], fixed_t: f64) -> (SwitchConfig, f64) {
        let s = z[..self.k].to_vec();
        let p0 = (self.np > 0).then(|| z[self.k..self.k + self.np].to_vec());
        let t = if self.free_t { z[self.k + self.np] } else { fixed_t };
        let cfg = SwitchConfig {
            s,
            p0,
            t_final: self.free_t.then_some(t),
        };
        (cfg, t)
    }

    /// Gradient in packed coordinates; the `T` entry holds the switch points
    /// fixed in time units.
    fn pack_gradient(&self, g: &GradientBundle, s: &[f64]) -> Vec<f64> {
        let mut out = g.d_s.clone();
        if let Some(dp) = &g.d_p0 {
            out.extend_from_slice(dp);
        }
        if self.free_t {
            out.push(g.d_t_fixed_switches(s).unwrap_or(0.0));
        }
        out
    }

    fn project(&self, z: &[f64], fixed_t: f64, eps: f64) -> Result<Vec<f64>> {
        let mut out = z.to_vec();
        if self.free_t {
            let mut chain = z[..self.k].to_vec();
            chain.push(z[self.k + self.np]);
            let p = project_chain(&chain, &vec![1.0; chain.len()], None, eps)?;
            out[..self.k].copy_from_slice(&p[..self.k]);
            out[self.k + self.np] = p[self.k];
        } else {
            let p = project_ordered(&z[..self.k], fixed_t, eps)?;
            out[..self.k].copy_from_slice(&p);
        }
        Ok(out)
    }
}

const APPROX_WOLFE_DELTA: f64 = 0.1;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Evaluator<'a> {
    prob: &'a ProblemDef,
    layout: Layout,
    fixed_t: f64,
    eval: EvalSettings,
    count: usize,
}

impl Evaluator<'_> {
    fn eval(&mut self, z: &[f64]) -> Result<(f64, Vec<f64>, GradientBundle)> {
        self.count += 1;
        let (cfg, t) = self.layout.unpack(z, self.fixed_t);
        let (b, _, _) = evaluate_at(self.prob, &cfg, t, &self.eval)?;
        let g = self.layout.pack_gradient(&b, &cfg.s);
        if !b.objective.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDerivative { phase: 0, t });
        }
        Ok((b.objective, g, b))
    }
}

/// Two-loop recursion: `−H g` with the stored `(s, y)` pairs.
fn lbfgs_direction(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y) in mem.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push((a, rho));
    }
    if let Some((s, y)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y), (a, rho)) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Projected L-BFGS with Armijo backtracking along the projected arc.
///
/// Every accepted iterate is feasible and the accepted objective values are
/// non-increasing. On failure the error carries the report of the last
/// accepted iterate.
pub fn minimize(
    prob: &ProblemDef,
    cfg0: &SwitchConfig,
    settings: &OptimizeSettings,
) -> Result<SolveReport> {
    settings.validate()?;
    prob.validate()?;
    let layout = Layout::of(prob);
    let t0 = resolve_horizon(prob, cfg0)?;
    let eps = settings.eps_gap.unwrap_or_else(|| default_min_gap(t0));
    let mut ev = Evaluator {
        prob,
        layout,
        fixed_t: t0,
        eval: EvalSettings {
            min_gap: Some(eps),
            sample_count: 0,
            ..settings.eval
        },
        count: 0,
    };
    if cfg0.s.len() != layout.k {
        return Err(Error::InvalidConfig(format!(
            "{} has {} switch points, start has {}",
            prob.name,
            layout.k,
            cfg0.s.len()
        )));
    }
    let mut z = layout.project(&layout.pack(cfg0, t0), t0, eps)?;
    let (mut f, mut g, mut bundle) = ev.eval(&z)?;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(settings.memory);
    let mut trace = Vec::new();
    let mut last_step = 0.0;
    // first-step length cap, in units of the horizon
    let first_step = 0.05 * t0;

    let report = |z: &[f64], f: f64, b: &GradientBundle, it: usize, evals, conv, stat, trace: &Vec<_>| {
        let (cfg, _) = layout.unpack(z, t0);
        SolveReport {
            problem: prob.name.clone(),
            method: "projected-lbfgs".into(),
            final_cfg: cfg,
            objective: f,
            iterations: it,
            gradient_evals: evals,
            converged: conv,
            stationarity: stat,
            worst_margin: b.feasibility_margins.iter().copied().fold(f64::INFINITY, f64::min),
            gradient: b.clone(),
            trace: trace.clone(),
            reference_errors: None,
        }
    };

    for iter in 0.. {
        let probe: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - b).collect();
        let pz = layout.project(&probe, t0, eps)?;
        let stat = inf_norm(&pz.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
        trace.push(IterationRecord {
            iteration: iter,
            objective: f,
            stationarity: stat,
            step: last_step,
        });
        log::debug!("iter {iter}: C = {f:.15e}, stationarity = {stat:.3e}");
        if stat <= settings.stat_tol {
            return Ok(report(&z, f, &bundle, iter, ev.count, true, stat, &trace));
        }
        if iter >= settings.max_iters {
            return Err(Error::MaxItersExceeded {
                report: Box::new(report(&z, f, &bundle, iter, ev.count, false, stat, &trace)),
            });
        }

        let mut d = lbfgs_direction(&g, &mem);
        if !(dot(&d, &g) < 0.0) || d.iter().any(|v| !v.is_finite()) {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let mut alpha = if mem.is_empty() {
            (first_step / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let zt = layout.project(&trial, t0, eps)?;
            let dz: Vec<f64> = zt.iter().zip(&z).map(|(a, b)| a - b).collect();
            if inf_norm(&dz) == 0.0 {
                break;
            }
            let decrease = dot(&g, &dz);
            if let Ok((ft, gt, bt)) = ev.eval(&zt) {
                // Near a minimizer the predicted decrease drops below the
                // integration noise in C; then fall back to the approximate
                // Wolfe slope test, still without letting C increase.
                let armijo = ft <= f + settings.ls_c1 * decrease;
                let approx_wolfe = ft <= f && dot(&gt, &dz) <= (2.0 * APPROX_WOLFE_DELTA - 1.0) * decrease;
                if armijo || approx_wolfe {
                    accepted = Some((zt, dz, ft, gt, bt));
                    break;
                }
            }
            alpha *= settings.ls_shrink;
        }
        let Some((zt, dz, ft, gt, bt)) = accepted else {
            return Err(Error::LineSearchFailure {
                report: Box::new(report(&z, f, &bundle, iter, ev.count, false, stat, &trace)),
            });
        };
        let dg: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&dz, &dg);
        if sy > 1e-12 * dot(&dz, &dz).sqrt() * dot(&dg, &dg).sqrt() {
            if mem.len() == settings.memory {
                mem.pop_front();
            }
            mem.push_back((dz.clone(), dg));
        }
        last_step = inf_norm(&dz);
        (z, f, g, bundle) = (zt, ft, gt, bt);
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_direction_solves_quadratic_after_memory() {
        // H = diag(1, 10); exact pairs recover H⁻¹ on the spanned space
        let mem: VecDeque<_> = vec![(vec![1.0, 0.0], vec![1.0, 0.0]), (vec![0.0, 1.0], vec![0.0, 10.0])]
            .into_iter()
            .collect();
        let d = lbfgs_direction(&[2.0, 20.0], &mem);
        assert!((d[0] + 2.0).abs() < 1e-12 && (d[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn settings_validation() {
        let mut s = OptimizeSettings::default();
        assert!(s.validate().is_ok());
        s.ls_c1 = 0.7;
        assert!(s.validate().is_err());
    }
}
