//! Euclidean projection onto ordered chains with minimum gaps.

use crate::error::{Error, Result};

/// Nondecreasing least-squares fit (pool adjacent violators), weighted.
pub fn isotonic_regression(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 + m2 * w2) / w, w, l1 + l2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat_n(m, l))
        .collect()
}

/// Projection of `v` onto `{eps ≤ v₁, v_j + eps ≤ v_{j+1}, v_k + eps ≤ horizon}`.
///
/// Shifting by `j·eps` turns the gaps into plain monotonicity with box
/// bounds; clipping the isotonic fit to the box is then exact.
pub fn project_ordered(v: &[f64], horizon: f64, eps_gap: f64) -> Result<Vec<f64>> {
    project_chain(v, &vec![1.0; v.len()], Some(horizon), eps_gap)
}

/// Weighted chain projection. Without an upper end the last entry is only
/// bounded through its predecessors (free terminal time as the last link).
pub fn project_chain(
    v: &[f64],
    weights: &[f64],
    upper: Option<f64>,
    eps_gap: f64,
) -> Result<Vec<f64>> {
    let k = v.len();
    let lo = 0.0;
    let hi = match upper {
        Some(t) => t - (k as f64 + 1.0) * eps_gap,
        None => f64::INFINITY,
    };
    if hi < lo || eps_gap < 0.0 {
        return Err(Error::InfeasiblePolytope {
            horizon: upper.unwrap_or(f64::NAN),
            count: k,
            gap: eps_gap,
        });
    }
    let shift = |j: usize| (j as f64 + 1.0) * eps_gap;
    let w: Vec<f64> = v.iter().enumerate().map(|(j, x)| x - shift(j)).collect();
    Ok(isotonic_regression(&w, weights)
        .into_iter()
        .enumerate()
        .map(|(j, x)| x.clamp(lo, hi) + shift(j))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_input_is_unchanged() {
        let v = [0.1, 0.3, 0.7];
        assert_eq!(project_ordered(&v, 1.0, 1e-3).unwrap(), v.to_vec());
    }

    #[test]
    fn swapped_pair_goes_to_mean() {
        let p = project_ordered(&[0.5, 0.4], 1.0, 0.0).unwrap();
        assert!((p[0] - 0.45).abs() < 1e-15 && (p[1] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn bounds_are_enforced() {
        let p = project_ordered(&[-1.0, 2.0], 1.0, 0.1).unwrap();
        assert!((p[0] - 0.1).abs() < 1e-15);
        assert!((p[1] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn too_many_gaps() {
        assert!(matches!(
            project_ordered(&[0.1, 0.2, 0.3], 1.0, 0.3),
            Err(Error::InfeasiblePolytope { count: 3, .. })
        ));
    }

    #[test]
    fn free_end_has_no_upper_bound() {
        let p = project_chain(&[5.0, 4.0, 100.0], &[1.0; 3], None, 1.0).unwrap();
        assert_eq!(p, vec![4.0, 5.0, 100.0]);
    }
}
