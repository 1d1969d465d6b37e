//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use switchpoint::benchmarks::{self, catalyst, goddard};
use switchpoint::fdcheck::check_gradient;
use switchpoint::gradients::{evaluate_at, forward_sweep, free_time_gradient_check, EvalSettings};
use switchpoint::optimizer::{minimize, project_ordered, secant_switch, OptimizeSettings};
use switchpoint::problem::SwitchConfig;
use switchpoint::warmstart::{detect_structure, solve_tv_euler, tv_prox, DetectSettings, PhaseKind, TvSettings};
use switchpoint::{Error, Exec};

type Outcome = Result<String, String>;

fn opt(ode_tol: f64) -> OptimizeSettings {
    OptimizeSettings {
        eval: EvalSettings::with_tolerance(ode_tol),
        ..Default::default()
    }
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn catalyst_solve(name: &str, t: f64, ode_tol: f64) -> Result<(switchpoint::SolveReport, Duration), String> {
    let b = benchmarks::by_name(name, Some(t)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut rep = minimize(&b.problem, &b.start, &opt(ode_tol)).map_err(|e| format!("{name} T={t}: {e}"))?;
    let elapsed = start.elapsed();
    b.reference.unwrap().annotate(&mut rep);
    Ok((rep, elapsed))
}

fn within_reference(rep: &switchpoint::SolveReport, elapsed: Duration, t: f64) -> (bool, String) {
    let e = rep.reference_errors.as_ref().unwrap();
    let ds = e.s.iter().cloned().fold(0.0, f64::max);
    let dc = e.objective.unwrap();
    let ok = ds <= 1e-6 && dc <= 1e-8 && elapsed.as_secs_f64() <= 10.0;
    (ok, format!("T={t}: |Δs|={ds:.1e} |ΔC|={dc:.1e} {:.0} ms", elapsed.as_secs_f64() * 1e3))
}

fn c1_catalyst_case_one() -> Outcome {
    let mut lines = Vec::new();
    let mut all = true;
    for t in [1.0, 4.0, 12.0] {
        let (rep, el) = catalyst_solve("catalyst1", t, 1e-13)?;
        let (ok, msg) = within_reference(&rep, el, t);
        all &= ok;
        lines.push(msg);
    }
    check(all, lines.join("; "))
}

fn c2_catalyst_case_two() -> Outcome {
    let (rep, el) = catalyst_solve("catalyst2", 1.0, 1e-13)?;
    let (ok, msg) = within_reference(&rep, el, 1.0);
    let b = benchmarks::by_name("catalyst2", Some(1.0)).unwrap();
    let fwd = forward_sweep(&b.problem, &rep.final_cfg, &opt(1e-13).eval).map_err(|e| e.to_string())?;
    let k = catalyst::Catalyst { k1: 1.0, k2: 10.0, k3: 1.0 };
    let target = 0.227142082708498;
    let worst = fwd
        .trajectory
        .steps
        .iter()
        .filter(|p| p.segment == 1)
        .map(|p| (catalyst::singular_feedback(&k, &p.state[..2], &p.state[2..4]) - target).abs())
        .fold(0.0, f64::max);
    check(ok && worst <= 1e-4, format!("{msg}; singular law deviation {worst:.1e}"))
}

fn c3_jacobson_secant() -> Outcome {
    let b = benchmarks::by_name("jacobson", None).unwrap();
    let out = secant_switch(&b.problem, &b.start, (1.41, 1.42), &opt(1e-12)).map_err(|e| e.to_string())?;
    let err = (out.root - 1.41376408763006).abs();
    check(err <= 1e-8 && out.iterations <= 10, format!("error {err:.1e} in {} iterations", out.iterations))
}

fn c4_bressan_secant() -> Outcome {
    let b = benchmarks::by_name("bressan", Some(10.0)).unwrap();
    let out = secant_switch(&b.problem, &b.start, (3.0, 4.0), &opt(1e-12)).map_err(|e| e.to_string())?;
    let err = (out.root - 10.0 / 3.0).abs();
    check(err <= 1e-10, format!("error {err:.1e} in {} iterations", out.iterations))
}

fn c5_goddard() -> Outcome {
    let b = benchmarks::by_name("goddard", None).unwrap();
    let settings = opt(1e-12);
    let start = Instant::now();
    let mut rep = minimize(&b.problem, &b.start, &settings).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    b.reference.unwrap().annotate(&mut rep);
    let e = rep.reference_errors.clone().unwrap();
    let fwd = forward_sweep(&b.problem, &rep.final_cfg, &settings.eval).map_err(|e| e.to_string())?;
    let dm = (fwd.terminal_state(3)[2] - 1.0).abs();
    let dt = e.t_final.unwrap();
    let ok = e.s.iter().all(|&d| d <= 1e-5) && dt <= 1e-5 && dm <= 1e-5;
    check(
        ok,
        format!(
            "|Δs|=({:.1e}, {:.1e}) |ΔT|={dt:.1e} |m(T)−1|={dm:.1e} {:.0} ms",
            e.s[0],
            e.s[1],
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn c6_gradient_oracle() -> Outcome {
    let mut rng = common::rng(2024);
    let ev = EvalSettings::with_tolerance(1e-12);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut count = 0;
    for name in benchmarks::NAMES {
        let b = benchmarks::by_name(name, None).unwrap();
        let r = b.reference.clone().unwrap();
        let t = r.t_star.unwrap_or_else(|| b.problem.horizon.nominal());
        for _ in 0..5 {
            let s = common::perturbed_switches(&mut rng, &r.s_star, 0.03 * t, t, 0.01 * t);
            let mut cfg = SwitchConfig { s, ..b.start.clone() };
            if let Some(p0) = cfg.p0.as_mut() {
                p0.iter_mut().for_each(|p| *p += rng.random_range(-0.05..0.05));
            }
            if b.problem.horizon.is_free() {
                cfg.t_final = Some(t + rng.random_range(-0.5..0.5));
            }
            let c = check_gradient(&b.problem, &cfg, &ev, 1e-6, 1e-5, 1e-8, Exec::default())
                .map_err(|e| format!("{name}: {e}"))?;
            count += c.rows.len();
            for row in &c.rows {
                if row.abs_err > 1e-8 {
                    worst = worst.max(row.rel_err);
                }
            }
            if !c.passed() {
                failures.push(format!("{name} at {:?}", cfg.s));
            }
        }
    }
    check(
        failures.is_empty(),
        format!("{count} components, worst relative error {worst:.1e} {}", failures.join(", ")),
    )
}

fn c7_case_reduction() -> Outcome {
    let one = catalyst::build(&catalyst::CatalystParams::default());
    let two = one.as_case2();
    let ev = EvalSettings::with_tolerance(1e-12);
    let cfg = SwitchConfig::new(vec![0.12, 0.7]);
    let (g1, _, _) = evaluate_at(&one, &cfg, 1.0, &ev).map_err(|e| e.to_string())?;
    let (g2, _, _) = evaluate_at(&two, &cfg.clone().with_p0(vec![0.9, 0.8]), 1.0, &ev).map_err(|e| e.to_string())?;
    let y2 = g2.d_p0.unwrap().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let ds = g1.d_s.iter().zip(&g2.d_s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(y2 <= 1e-7 && ds <= 1e-8, format!("‖y₂(0)‖∞={y2:.1e} |Δd_s|={ds:.1e}"))
}

fn c8_free_time() -> Outcome {
    let params = goddard::GoddardParams::default();
    let b = benchmarks::by_name("goddard", None).unwrap();
    let r = b.reference.unwrap();
    let ev = EvalSettings::with_tolerance(1e-12);
    let t_star = r.t_star.unwrap();
    let cfg = SwitchConfig::new(r.s_star.clone()).with_t_final(t_star);
    let (g, _, _) = evaluate_at(&b.problem, &cfg, t_star, &ev).map_err(|e| e.to_string())?;
    let normalized = g.d_t.unwrap().abs() / params.beta_pen.abs();
    let mut ok = normalized <= 1e-4;
    let mut msg = format!("|∫H dτ|/|β| = {normalized:.1e}");
    for t in [41.0, 44.5] {
        let cfg = SwitchConfig::new(r.s_star.iter().map(|s| s * t / t_star).collect()).with_t_final(t);
        let fc = free_time_gradient_check(&b.problem, &cfg, &ev, 1e-6).map_err(|e| e.to_string())?;
        let rel = (fc.analytic - fc.finite_difference).abs() / fc.analytic.abs();
        ok &= rel <= 1e-5;
        msg.push_str(&format!("; T={t}: dC/dT={:.6e} rel err {rel:.1e}", fc.analytic));
    }
    check(ok, msg)
}

fn c9_warm_start() -> Outcome {
    let b = benchmarks::by_name("catalyst1", Some(1.0)).unwrap();
    let r = b.reference.unwrap();
    let settings = TvSettings { n_intervals: 100, rho_tv: 1e-3, ..Default::default() };
    let d = solve_tv_euler(&b.problem, &settings).map_err(|e| e.to_string())?;
    let s = detect_structure(&d, &DetectSettings::default()).map_err(|e| e.to_string())?;
    let kinds_ok = s.phase_kinds == [PhaseKind::BangHigh, PhaseKind::Singular, PhaseKind::BangLow];
    let near = s.switch_times.len() == 2
        && s.switch_times.iter().zip(&r.s_star).all(|(a, b)| (a - b).abs() <= 0.02);
    let zero = solve_tv_euler(&b.problem, &TvSettings { rho_tv: 0.0, ..settings }).map_err(|e| e.to_string())?;
    let no_structure = matches!(detect_structure(&zero, &DetectSettings::default()), Err(Error::NoStructure(_)));
    check(
        kinds_ok && near && no_structure,
        format!(
            "ρ=1e-3: switches {:?} kinds {:?}; ρ=0: {}",
            s.switch_times,
            s.phase_kinds,
            if no_structure { "NoStructure" } else { "structure found" }
        ),
    )
}

fn c10_tv_prox() -> Outcome {
    let mut rng = common::rng(10);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda = rng.random_range(0.0..0.8);
        let z = tv_prox(&y, lambda);
        let o = common::tv_oracle(&y, lambda);
        worst = z.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let mut expansive = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=30);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lambda = rng.random_range(0.0..1.0);
        let dist = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        if dist(&tv_prox(&a, lambda), &tv_prox(&b, lambda)) > dist(&a, &b) * (1.0 + 1e-12) {
            expansive += 1;
        }
    }
    check(
        worst <= 1e-8 && expansive == 0,
        format!("max oracle deviation {worst:.1e}; expansive pairs {expansive}/200"),
    )
}

fn c11_projection() -> Outcome {
    let mut rng = common::rng(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..=6);
        let horizon = rng.random_range(0.5..3.0);
        let eps = rng.random_range(0.0..0.3 * horizon / (k as f64 + 1.0));
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(-0.5..horizon + 0.5)).collect();
        let z = project_ordered(&v, horizon, eps).map_err(|e| e.to_string())?;
        let o = common::projection_oracle(&v, horizon, eps).ok_or("oracle found no feasible point")?;
        worst = z.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    check(worst <= 1e-10, format!("max deviation from active-set oracle {worst:.1e}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("catalyst case 1, T = 1, 4, 12", c1_catalyst_case_one),
        ("catalyst case 2, T = 1", c2_catalyst_case_two),
        ("Jacobson secant", c3_jacobson_secant),
        ("Bressan secant", c4_bressan_secant),
        ("Goddard free time", c5_goddard),
        ("gradient vs finite differences", c6_gradient_oracle),
        ("case reduction", c7_case_reduction),
        ("free-time identity", c8_free_time),
        ("TV warm start", c9_warm_start),
        ("TV prox oracle", c10_tv_prox),
        ("chain projection oracle", c11_projection),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
