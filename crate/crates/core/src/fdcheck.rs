//! Central finite differences of the objective, for checking the analytic
//! gradient. Perturbations are independent and run through [`Exec`].

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gradients::{evaluate_at, objective_at, resolve_horizon, EvalSettings, GradientBundle};
use crate::par::Exec;
use crate::problem::{ProblemDef, SwitchConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdGradient {
    pub d_s: Vec<f64>,
    pub d_p0: Option<Vec<f64>>,
    /// Switch points fixed on the rescaled clock, as in [`GradientBundle::d_t`].
    pub d_t: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    S(usize),
    P(usize),
    T,
}

/// Central differences with absolute step `delta`.
pub fn fd_gradient(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    eval: &EvalSettings,
    delta: f64,
    exec: Exec,
) -> Result<FdGradient> {
    let t = resolve_horizon(prob, cfg)?;
    let mut coords: Vec<Coord> = (0..cfg.s.len()).map(Coord::S).collect();
    if let Some(p0) = &cfg.p0 {
        coords.extend((0..p0.len()).map(Coord::P));
    }
    if prob.horizon.is_free() {
        coords.push(Coord::T);
    }
    // the probe points may sit closer together than the default gap
    let eval = EvalSettings {
        min_gap: Some(eval.min_gap_for(t).min(0.25 * delta)),
        sample_count: 0,
        ..*eval
    };
    let shifted = |c: Coord, h: f64| -> Result<f64> {
        let mut cc = cfg.clone();
        let mut tt = t;
        match c {
            Coord::S(j) => cc.s[j] += h,
            Coord::P(i) => cc.p0.as_mut().unwrap()[i] += h,
            Coord::T => {
                tt = t + h;
                cc.s.iter_mut().for_each(|s| *s *= tt / t);
                cc.t_final = Some(tt);
            }
        }
        objective_at(prob, &cc, tt, &eval)
    };
    let diffs = exec.map(&coords, |&c| -> Result<f64> {
        Ok((shifted(c, delta)? - shifted(c, -delta)?) / (2.0 * delta))
    });
    let mut out = FdGradient {
        d_s: Vec::new(),
        d_p0: cfg.p0.as_ref().map(|_| Vec::new()),
        d_t: None,
    };
    for (c, d) in coords.into_iter().zip(diffs) {
        let d = d?;
        match c {
            Coord::S(_) => out.d_s.push(d),
            Coord::P(_) => out.d_p0.as_mut().unwrap().push(d),
            Coord::T => out.d_t = Some(d),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckRow {
    pub name: String,
    pub analytic: f64,
    pub finite_difference: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub objective: f64,
    pub rows: Vec<GradientCheckRow>,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Agreement to `rel_tol` relative or `abs_tol` absolute, whichever is looser.
pub fn agrees(a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> bool {
    let err = (a - b).abs();
    err <= abs_tol || err <= rel_tol * a.abs().max(b.abs())
}

pub fn compare(
    analytic: &GradientBundle,
    fd: &FdGradient,
    rel_tol: f64,
    abs_tol: f64,
) -> GradientCheck {
    let mut rows = Vec::new();
    let mut push = |name: String, a: f64, b: f64| {
        let abs_err = (a - b).abs();
        rows.push(GradientCheckRow {
            name,
            analytic: a,
            finite_difference: b,
            abs_err,
            rel_err: abs_err / a.abs().max(b.abs()).max(f64::MIN_POSITIVE),
            pass: agrees(a, b, rel_tol, abs_tol),
        });
    };
    for (j, (a, b)) in analytic.d_s.iter().zip(&fd.d_s).enumerate() {
        push(format!("d_s{}", j + 1), *a, *b);
    }
    if let (Some(a), Some(b)) = (&analytic.d_p0, &fd.d_p0) {
        for (i, (a, b)) in a.iter().zip(b).enumerate() {
            push(format!("d_p0_{}", i + 1), *a, *b);
        }
    }
    if let (Some(a), Some(b)) = (analytic.d_t, fd.d_t) {
        push("d_T".into(), a, b);
    }
    GradientCheck {
        objective: analytic.objective,
        rows,
    }
}

/// Analytic gradient against central differences in one call.
pub fn check_gradient(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    eval: &EvalSettings,
    delta: f64,
    rel_tol: f64,
    abs_tol: f64,
    exec: Exec,
) -> Result<GradientCheck> {
    let t = resolve_horizon(prob, cfg)?;
    let (analytic, _, _) = evaluate_at(prob, cfg, t, eval)?;
    let fd = fd_gradient(prob, cfg, eval, delta, exec)?;
    Ok(compare(&analytic, &fd, rel_tol, abs_tol))
}
