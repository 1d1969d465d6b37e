use std::path::{Path, PathBuf};

use rayon::prelude::*;
use switchpoint::benchmarks::{self, Benchmark};
use switchpoint::fdcheck::check_gradient;
use switchpoint::gradients::{evaluate_at, resolve_horizon, validate_config, EvalSettings};
use switchpoint::optimizer::{derivative_profile, minimize, secant_switch, OptimizeSettings, SolveReport};
use switchpoint::problem::{default_min_gap, ProblemCase, ProblemDef, SwitchConfig};
use switchpoint::warmstart::{detect_structure, solve_tv_euler, DetectSettings, StructureEstimate, TvSettings};
use switchpoint::{Error, Exec};

use crate::args::{CheckArgs, ProblemArgs, ProfileArgs, SolveArgs, TvArgs, WarmArgs};
use crate::output::{self, write_json};
use crate::{CliError, EXIT_CHECK, EXIT_OK, EXIT_SOLVER};

/// Samples per unit of the rescaled clock in trajectory.csv.
const TRAJECTORY_SAMPLES: usize = 201;

fn single_horizon(p: &ProblemArgs) -> Result<Option<f64>, CliError> {
    match p.horizon.as_slice() {
        [] => Ok(None),
        [t] => Ok(Some(*t)),
        _ => Err(CliError::config("only `solve` accepts several --T values")),
    }
}

fn single_tol(p: &ProblemArgs) -> Result<f64, CliError> {
    match p.ode_tol.as_slice() {
        [t] => Ok(*t),
        _ => Err(CliError::config("only `solve` accepts several --ode-tol values")),
    }
}

/// Benchmark with the command-line overrides applied.
fn load(p: &ProblemArgs, horizon: Option<f64>) -> Result<Benchmark, CliError> {
    let name = match (p.problem.as_str(), p.case) {
        ("catalyst1", Some(2)) => "catalyst2",
        ("catalyst2", Some(1)) => "catalyst1",
        (other, _) => other,
    };
    let mut b = benchmarks::by_name(name, horizon)?;
    if p.case == Some(2) && b.problem.case == ProblemCase::One {
        b.problem = b.problem.as_case2();
    } else if p.case == Some(1) && b.problem.case == ProblemCase::Two {
        return Err(CliError::config(format!("{name} has no Case-1 formulation")));
    }
    if let Some(s0) = &p.s0 {
        let k = b.problem.switch_count();
        if s0.len() != k {
            return Err(CliError::config(format!("{name} has {k} switch points, --s0 gives {}", s0.len())));
        }
        b.start.s = s0.clone();
    }
    match (&p.p0, b.problem.case) {
        (Some(_), ProblemCase::One) => {
            return Err(CliError::config("--p0 applies to Case-2 problems only (use --case 2)"));
        }
        (Some(p0), ProblemCase::Two) => b.start.p0 = Some(p0.clone()),
        (None, ProblemCase::Two) if b.start.p0.is_none() => {
            return Err(CliError::config(format!("{name} in Case 2 needs --p0")));
        }
        _ => {}
    }
    // user-supplied starts are checked, not silently projected
    if p.s0.is_some() {
        let t = resolve_horizon(&b.problem, &b.start)?;
        validate_config(&b.problem, &b.start, t, default_min_gap(t))?;
    }
    Ok(b)
}

fn tv_settings(tv: &TvArgs, horizon: Option<f64>, prob: &ProblemDef) -> TvSettings {
    TvSettings {
        n_intervals: tv.n_intervals,
        rho_tv: tv.rho_tv,
        max_iters: tv.tv_max_iters,
        horizon: horizon.or(Some(prob.horizon.nominal())),
        ..Default::default()
    }
}

/// Writes u_profile.csv, then structure.json if a structure is found.
fn run_warmstart(prob: &ProblemDef, settings: &TvSettings, expect: Option<usize>, out: &Path) -> Result<StructureEstimate, CliError> {
    let dcp = solve_tv_euler(prob, settings)?;
    output::write_u_profile(&out.join("u_profile.csv"), &dcp)?;
    if !dcp.converged {
        eprintln!("warning: TV solve stopped at the iteration limit ({} iterations)", dcp.iterations);
    }
    let structure = detect_structure(&dcp, &DetectSettings { expected: expect, ..Default::default() })?;
    write_json(&out.join("structure.json"), &structure)?;
    Ok(structure)
}

pub fn warmstart(a: &WarmArgs) -> Result<u8, CliError> {
    let horizon = single_horizon(&a.problem)?;
    single_tol(&a.problem)?;
    let b = load(&a.problem, horizon)?;
    let s = run_warmstart(&b.problem, &tv_settings(&a.tv, horizon, &b.problem), a.expect, &a.problem.out)?;
    println!("switches {:?}", s.switch_times);
    println!("phases   {:?}", s.phase_kinds);
    println!("p0       {:?}", s.p0_estimate);
    if s.flagged {
        println!("flagged: more jumps than expected");
    }
    Ok(EXIT_OK)
}

fn write_trajectory(prob: &ProblemDef, cfg: &SwitchConfig, eval: &EvalSettings, path: &Path) -> Result<(), CliError> {
    let t = resolve_horizon(prob, cfg)?;
    let ev = EvalSettings {
        sample_count: TRAJECTORY_SAMPLES,
        ..*eval
    };
    let (_, _, bwd) = evaluate_at(prob, cfg, t, &ev)?;
    let n = prob.n();
    let mut rows = Vec::with_capacity(bwd.samples.len());
    for sample in &bwd.samples {
        let x = &sample.state[..n];
        let p = &sample.state[n..2 * n];
        let costate = (prob.case == ProblemCase::Two).then_some(p);
        let u = prob.phase_control(sample.phase, sample.t, x, costate)?;
        rows.push((sample.t, x.to_vec(), u, p.to_vec()));
    }
    output::write_trajectory(path, n, prob.m(), &rows)
}

fn solve_one(a: &SolveArgs, horizon: Option<f64>, ode_tol: f64, out: &Path) -> Result<SolveReport, CliError> {
    let b = load(&a.problem, horizon)?;
    let prob = &b.problem;
    let settings = OptimizeSettings {
        stat_tol: a.opt_tol,
        max_iters: a.max_iters,
        eval: EvalSettings::with_tolerance(ode_tol),
        ..Default::default()
    };
    let mut cfg = b.start.clone();
    if a.warmstart {
        let s = run_warmstart(prob, &tv_settings(&a.tv, horizon, prob), Some(prob.switch_count()), out)?;
        if s.switch_times.len() != prob.switch_count() {
            return Err(CliError::solver(format!(
                "warm start found {} switches, {} expects {}",
                s.switch_times.len(),
                prob.name,
                prob.switch_count()
            )));
        }
        cfg = s.to_config(prob);
    }
    let result = if a.secant {
        let bracket = match a.bracket.as_deref() {
            Some([l, r]) => (*l, *r),
            Some(_) => return Err(CliError::config("--bracket takes two comma-separated values")),
            None => {
                let s0 = *cfg.s.first().ok_or_else(|| CliError::config("secant needs one switch point"))?;
                (s0, s0 + 0.01 * prob.horizon.nominal())
            }
        };
        secant_switch(prob, &cfg, bracket, &settings).and_then(|o| o.to_report(prob, &cfg, &settings.eval))
    } else {
        minimize(prob, &cfg, &settings)
    };
    let (mut report, failure) = match result {
        Ok(r) => (r, None),
        Err(Error::MaxItersExceeded { report }) => {
            let msg = format!("optimizer hit the iteration limit (stationarity {:.3e})", report.stationarity);
            (*report, Some(msg))
        }
        Err(Error::LineSearchFailure { report }) => {
            let msg = format!("line search failed (stationarity {:.3e})", report.stationarity);
            (*report, Some(msg))
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(r) = &b.reference {
        r.annotate(&mut report);
    }
    write_json(&out.join("report.json"), &report)?;
    write_trajectory(prob, &report.final_cfg, &settings.eval, &out.join("trajectory.csv"))?;
    match failure {
        Some(msg) => Err(CliError::solver(msg)),
        None => Ok(report),
    }
}

fn summary(report: &SolveReport) -> String {
    let mut line = format!(
        "{} [{}] C = {} s = {:?}",
        report.problem,
        report.method,
        output::num(report.objective),
        report.final_cfg.s
    );
    if let Some(t) = report.final_cfg.t_final {
        line.push_str(&format!(" T = {t}"));
    }
    if let Some(p0) = &report.final_cfg.p0 {
        line.push_str(&format!(" p0 = {p0:?}"));
    }
    line.push_str(&format!(
        " ({} iterations, {} gradient evaluations, stationarity {:.2e})",
        report.iterations, report.gradient_evals, report.stationarity
    ));
    if let Some(e) = &report.reference_errors {
        line.push_str(&format!("\n  reference errors: s {:?}", e.s));
        if let Some(t) = e.t_final {
            line.push_str(&format!(" T {t:.2e}"));
        }
        if let Some(c) = e.objective {
            line.push_str(&format!(" C {c:.2e}"));
        }
    }
    line
}

pub fn solve(a: &SolveArgs, exec: Exec) -> Result<u8, CliError> {
    let horizons: Vec<Option<f64>> = if a.problem.horizon.is_empty() {
        vec![None]
    } else {
        a.problem.horizon.iter().map(|&t| Some(t)).collect()
    };
    let runs: Vec<(Option<f64>, f64)> = horizons
        .iter()
        .flat_map(|&t| a.problem.ode_tol.iter().map(move |&tol| (t, tol)))
        .collect();
    if let [(t, tol)] = runs.as_slice() {
        let report = solve_one(a, *t, *tol, &a.problem.out)?;
        println!("{}", summary(&report));
        return Ok(EXIT_OK);
    }
    // sweep: one subdirectory per (T, tolerance) pair
    let dir = |t: Option<f64>, tol: f64| -> PathBuf {
        let t = t.map_or("default".to_string(), |t| t.to_string());
        a.problem.out.join(format!("{}_T{t}_tol{tol:e}", a.problem.problem))
    };
    let run = |&(t, tol): &(Option<f64>, f64)| solve_one(a, t, tol, &dir(t, tol));
    let results: Vec<_> = if exec.is_parallel() {
        runs.par_iter().map(run).collect()
    } else {
        runs.iter().map(run).collect()
    };
    let mut code = EXIT_OK;
    for ((t, tol), r) in runs.iter().zip(results) {
        match r {
            Ok(report) => println!("{}: {}", dir(*t, *tol).display(), summary(&report)),
            Err(e) => {
                eprintln!("{}: error: {e}", dir(*t, *tol).display());
                code = code.max(e.code);
            }
        }
    }
    Ok(code)
}

pub fn gradcheck(a: &CheckArgs, exec: Exec) -> Result<u8, CliError> {
    let horizon = single_horizon(&a.problem)?;
    let b = load(&a.problem, horizon)?;
    let eval = EvalSettings::with_tolerance(single_tol(&a.problem)?);
    let check = check_gradient(&b.problem, &b.start, &eval, a.delta, a.rel_tol, a.abs_tol, exec)?;
    println!("{} at s = {:?}, C = {}", b.problem.name, b.start.s, output::num(check.objective));
    println!("{:<8} {:>24} {:>24} {:>10} {:>10}  ok", "entry", "analytic", "finite diff", "abs err", "rel err");
    for r in &check.rows {
        println!(
            "{:<8} {:>24.16e} {:>24.16e} {:>10.2e} {:>10.2e}  {}",
            r.name,
            r.analytic,
            r.finite_difference,
            r.abs_err,
            r.rel_err,
            if r.pass { "yes" } else { "NO" }
        );
    }
    write_json(&a.problem.out.join("gradcheck.json"), &check)?;
    Ok(if check.passed() { EXIT_OK } else { EXIT_CHECK })
}

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::config(format!("bad --grid '{text}' (expected start:end:count or a comma list)"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, end, count] => {
            let (a, b): (f64, f64) = (start.trim().parse().map_err(|_| bad())?, end.trim().parse().map_err(|_| bad())?);
            let n: usize = count.trim().parse().map_err(|_| bad())?;
            match n {
                0 => Err(bad()),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        [list] => list.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
        _ => Err(bad()),
    }
}

pub fn profile(a: &ProfileArgs, exec: Exec) -> Result<u8, CliError> {
    let horizon = single_horizon(&a.problem)?;
    let b = load(&a.problem, horizon)?;
    let grid = parse_grid(&a.grid)?;
    let eval = EvalSettings::with_tolerance(single_tol(&a.problem)?);
    let points = derivative_profile(&b.problem, &b.start, &grid, &eval, exec)?;
    output::write_profile(&a.problem.out.join("derivative_profile.csv"), &points)?;
    let changes: Vec<f64> = points.iter().filter(|p| p.sign_change).map(|p| p.s).collect();
    println!("{} grid points, {} sign change(s) of dC/ds", points.len(), changes.len());
    for s in changes {
        println!("  sign change ending at s = {s}");
    }
    if points.iter().any(|p| !p.d_s.is_finite()) {
        return Ok(EXIT_SOLVER);
    }
    Ok(EXIT_OK)
}
