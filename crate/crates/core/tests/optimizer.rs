use switchpoint::benchmarks;
use switchpoint::gradients::EvalSettings;
use switchpoint::optimizer::{minimize, project_ordered, OptimizeSettings};
use switchpoint::problem::SwitchConfig;
use switchpoint::Error;

fn settings(tol: f64) -> OptimizeSettings {
    OptimizeSettings {
        eval: EvalSettings::with_tolerance(tol),
        ..Default::default()
    }
}

#[test]
fn infeasible_start_is_projected_first() {
    let b = benchmarks::by_name("catalyst1", Some(1.0)).unwrap();
    let rep = minimize(&b.problem, &SwitchConfig::new(vec![0.9, 0.2]), &settings(1e-13)).unwrap();
    assert!(rep.converged);
    let r = b.reference.unwrap();
    assert!((rep.final_cfg.s[0] - r.s_star[0]).abs() < 1e-6);
}

#[test]
fn iteration_limit_is_reported_with_the_best_point() {
    let b = benchmarks::by_name("catalyst1", Some(1.0)).unwrap();
    let mut s = settings(1e-12);
    s.max_iters = 2;
    match minimize(&b.problem, &b.start, &s) {
        Err(Error::MaxItersExceeded { report, .. }) => {
            assert_eq!(report.iterations, 2);
            assert!(!report.converged);
            assert!(report.objective.is_finite());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn objective_trace_is_monotone() {
    let b = benchmarks::by_name("catalyst1", Some(4.0)).unwrap();
    let rep = minimize(&b.problem, &b.start, &settings(1e-13)).unwrap();
    assert!(rep.trace.windows(2).all(|w| w[1].objective <= w[0].objective));
}

#[test]
fn too_many_switches_for_the_gap_is_infeasible() {
    let e = project_ordered(&[0.1, 0.2, 0.3], 0.1, 0.05);
    assert!(matches!(e, Err(Error::InfeasiblePolytope { .. })));
}

#[test]
fn bressan_single_switch_by_lbfgs() {
    let b = benchmarks::by_name("bressan", None).unwrap();
    let rep = minimize(&b.problem, &b.start, &settings(1e-12)).unwrap();
    assert!((rep.final_cfg.s[0] - 10.0 / 3.0).abs() < 1e-6);
    assert!(rep.worst_margin >= 0.0);
}
