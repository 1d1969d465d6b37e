mod common;

use proptest::prelude::*;
use switchpoint::odeint::{integrate_piecewise, Direction, IntegratorSettings, PiecewiseOde};
use switchpoint::optimizer::{isotonic_regression, project_ordered};
use switchpoint::warmstart::{total_variation, tv_prox};

fn signal(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 1..=max_len)
}

proptest! {
    #[test]
    fn tv_prox_matches_exhaustive_oracle(y in signal(6), lambda in 0.0..1.5f64) {
        let z = tv_prox(&y, lambda);
        let o = common::tv_oracle(&y, lambda);
        for (a, b) in z.iter().zip(&o) {
            prop_assert!((a - b).abs() <= 1e-8, "{z:?} vs {o:?}");
        }
    }

    #[test]
    fn tv_prox_is_nonexpansive(
        pair in (1usize..40).prop_flat_map(|n| (prop::collection::vec(-3.0..3.0f64, n), prop::collection::vec(-3.0..3.0f64, n))),
        lambda in 0.0..2.0f64,
    ) {
        let (a, b) = pair;
        let za = tv_prox(&a, lambda);
        let zb = tv_prox(&b, lambda);
        let d_out: f64 = za.iter().zip(&zb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let d_in: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d_out <= d_in * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn tv_prox_preserves_mean_and_does_not_raise_variation(y in signal(50), lambda in 0.0..1.0f64) {
        let z = tv_prox(&y, lambda);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((mean(&z) - mean(&y)).abs() <= 1e-12);
        prop_assert!(total_variation(&z) <= total_variation(&y) + 1e-12);
    }

    #[test]
    fn projection_matches_active_set_oracle(
        v in prop::collection::vec(-0.5..1.5f64, 1..=6),
        horizon in 0.5..2.0f64,
        eps in 0.0..0.05f64,
    ) {
        let z = project_ordered(&v, horizon, eps).unwrap();
        let o = common::projection_oracle(&v, horizon, eps).unwrap();
        for (a, b) in z.iter().zip(&o) {
            prop_assert!((a - b).abs() <= 1e-10, "{z:?} vs {o:?}");
        }
    }

    #[test]
    fn projection_is_idempotent(v in prop::collection::vec(-1.0..2.0f64, 1..=8), eps in 0.0..0.05f64) {
        let z = project_ordered(&v, 1.0, eps).unwrap();
        // equal up to the rounding of the gap shift
        let zz = project_ordered(&z, 1.0, eps).unwrap();
        prop_assert!(z.iter().zip(&zz).all(|(a, b)| (a - b).abs() <= 1e-15));
    }

    #[test]
    fn isotonic_fit_is_monotone(v in prop::collection::vec(-5.0..5.0f64, 1..30)) {
        let z = isotonic_regression(&v, &vec![1.0; v.len()]);
        prop_assert!(z.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn integrator_round_trip(a in -1.0..1.0f64, b in -1.0..1.0f64, x0 in -2.0..2.0f64, cut in 0.1..0.9f64) {
        // ẋ = a·x + sin(t) on [0, cut], then ẋ = b·x on [cut, 1]
        let ode = PiecewiseOde::new(1, vec![0.0, cut, 1.0], move |seg, t, y: &[f64], dy: &mut [f64]| {
            dy[0] = if seg == 0 { a * y[0] + t.sin() } else { b * y[0] };
        }).unwrap();
        let s = IntegratorSettings::with_tolerance(1e-11);
        let fwd = integrate_piecewise(&ode, &[x0], Direction::Forward, &s, 0).unwrap();
        let back = integrate_piecewise(&ode, fwd.terminal_state(), Direction::Backward, &s, 0).unwrap();
        prop_assert!((back.terminal_state()[0] - x0).abs() <= 1e-8 * (1.0 + x0.abs()));
    }
}

#[test]
fn tv_prox_oracle_on_seeded_signals() {
    use rand::Rng;
    let mut rng = common::rng(7);
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lambda = rng.random_range(0.0..1.0);
        let z = tv_prox(&y, lambda);
        let o = common::tv_oracle(&y, lambda);
        assert!(z.iter().zip(&o).all(|(a, b)| (a - b).abs() <= 1e-8), "{y:?} {lambda}");
    }
}
