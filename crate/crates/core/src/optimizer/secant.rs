use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{evaluate_at, resolve_horizon, EvalSettings};
use crate::optimizer::{IterationRecord, SolveReport};
use crate::par::Exec;
use crate::problem::{ProblemDef, SwitchConfig};

use super::OptimizeSettings;

/// Classification of a root of `s ↦ ∂C/∂s` by the slope of the derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecantOutcome {
    pub root: f64,
    pub iterations: usize,
    pub gradient_evals: usize,
    /// `∂C/∂s` at the root.
    pub residual: f64,
    /// Last secant slope of `∂C/∂s`.
    pub slope: f64,
    pub kind: RootKind,
    pub objective: f64,
    /// Every evaluation, in order.
    pub history: Vec<SecantStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecantStep {
    pub s: f64,
    pub d_s: f64,
    pub objective: f64,
}

/// Secant iteration on `g(s) = ∂C/∂s₁` for problems with one switch point.
///
/// Stops when `|g| ≤ stat_tol` or `|Δs| ≤ 1e-14·T`. A negative slope at the
/// root marks a local maximum of the objective.
pub fn secant_switch(
    prob: &ProblemDef,
    base: &SwitchConfig,
    bracket: (f64, f64),
    settings: &OptimizeSettings,
) -> Result<SecantOutcome> {
    settings.validate()?;
    if prob.switch_count() != 1 {
        return Err(Error::InvalidConfig(format!(
            "secant search needs exactly one switch point, {} has {}",
            prob.name,
            prob.switch_count()
        )));
    }
    let t = resolve_horizon(prob, base)?;
    let eval = EvalSettings {
        sample_count: 0,
        ..settings.eval
    };
    let mut history = Vec::new();
    let g_at = |s: f64, history: &mut Vec<SecantStep>| -> Result<(f64, f64)> {
        let cfg = SwitchConfig {
            s: vec![s],
            ..base.clone()
        };
        let (b, _, _) = evaluate_at(prob, &cfg, t, &eval)?;
        history.push(SecantStep {
            s,
            d_s: b.d_s[0],
            objective: b.objective,
        });
        Ok((b.d_s[0], b.objective))
    };

    let (mut s0, mut s1) = bracket;
    if s0 == s1 {
        return Err(Error::InvalidConfig("secant bracket has zero width".into()));
    }
    let (mut g0, _) = g_at(s0, &mut history)?;
    let (mut g1, mut c1) = g_at(s1, &mut history)?;
    let mut slope = (g1 - g0) / (s1 - s0);
    let finish = |s: f64, g: f64, c: f64, slope: f64, it: usize, history: Vec<SecantStep>| SecantOutcome {
        root: s,
        iterations: it,
        gradient_evals: history.len(),
        residual: g,
        slope,
        kind: if slope >= 0.0 { RootKind::Minimum } else { RootKind::Maximum },
        objective: c,
        history,
    };
    if g0.abs() <= settings.stat_tol && g0.abs() < g1.abs() {
        let (_, c0) = g_at(s0, &mut history)?;
        return Ok(finish(s0, g0, c0, slope, 0, history));
    }
    for it in 1..=settings.max_iters {
        if g1.abs() <= settings.stat_tol {
            return Ok(finish(s1, g1, c1, slope, it - 1, history));
        }
        if g1 == g0 {
            return Err(Error::SecantDivergence(format!(
                "flat secant at s = {s1} (dC/ds = {g1:e})"
            )));
        }
        let s2 = s1 - g1 * (s1 - s0) / (g1 - g0);
        if !(s2 > 0.0 && s2 < t) {
            return Err(Error::SecantDivergence(format!(
                "iterate {s2} left (0, {t}) after {it} steps"
            )));
        }
        let step = s2 - s1;
        let (g2, c2) = g_at(s2, &mut history)?;
        slope = (g2 - g1) / step;
        (s0, g0, s1, g1, c1) = (s1, g1, s2, g2, c2);
        if step.abs() <= 1e-14 * t || g1.abs() <= settings.stat_tol {
            return Ok(finish(s1, g1, c1, slope, it, history));
        }
    }
    Err(Error::SecantDivergence(format!(
        "no root after {} iterations (last s = {s1}, dC/ds = {g1:e})",
        settings.max_iters
    )))
}

impl SecantOutcome {
    /// Solver report at the root, with one trace entry per secant evaluation.
    pub fn to_report(&self, prob: &ProblemDef, base: &SwitchConfig, eval: &EvalSettings) -> Result<SolveReport> {
        let cfg = SwitchConfig {
            s: vec![self.root],
            ..base.clone()
        };
        let t = resolve_horizon(prob, &cfg)?;
        let (gradient, _, _) = evaluate_at(prob, &cfg, t, eval)?;
        let trace = self
            .history
            .iter()
            .enumerate()
            .map(|(i, h)| IterationRecord {
                iteration: i,
                objective: h.objective,
                stationarity: h.d_s.abs(),
                step: if i == 0 { 0.0 } else { (h.s - self.history[i - 1].s).abs() },
            })
            .collect();
        Ok(SolveReport {
            problem: prob.name.clone(),
            method: match self.kind {
                RootKind::Minimum => "secant".into(),
                RootKind::Maximum => "secant (local maximum)".into(),
            },
            final_cfg: cfg,
            objective: gradient.objective,
            iterations: self.iterations,
            gradient_evals: self.gradient_evals,
            converged: true,
            stationarity: self.residual.abs(),
            worst_margin: gradient.feasibility_margins.iter().copied().fold(f64::INFINITY, f64::min),
            gradient,
            trace,
            reference_errors: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub s: f64,
    pub d_s: f64,
    /// `∂C/∂s` changes sign between the previous grid point and this one.
    pub sign_change: bool,
}

/// `∂C/∂s₁` over a grid of single switch points (one evaluation per point).
pub fn derivative_profile(
    prob: &ProblemDef,
    base: &SwitchConfig,
    grid: &[f64],
    eval: &EvalSettings,
    exec: Exec,
) -> Result<Vec<ProfilePoint>> {
    if prob.switch_count() != 1 {
        return Err(Error::InvalidConfig(format!(
            "derivative profile needs exactly one switch point, {} has {}",
            prob.name,
            prob.switch_count()
        )));
    }
    let t = resolve_horizon(prob, base)?;
    let eval = EvalSettings {
        sample_count: 0,
        ..*eval
    };
    let values = exec.map(grid, |&s| {
        let cfg = SwitchConfig {
            s: vec![s],
            ..base.clone()
        };
        evaluate_at(prob, &cfg, t, &eval).map(|(b, _, _)| b.d_s[0])
    });
    let mut out = Vec::with_capacity(grid.len());
    let mut prev: Option<f64> = None;
    for (&s, v) in grid.iter().zip(values) {
        let d = v?;
        let sign_change = prev.is_some_and(|p| (p < 0.0 && d >= 0.0) || (p > 0.0 && d <= 0.0));
        out.push(ProfilePoint { s, d_s: d, sign_change });
        prev = Some(d);
    }
    Ok(out)
}
