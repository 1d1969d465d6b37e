//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tv_objective(z: &[f64], y: &[f64], lambda: f64) -> f64 {
    let fit: f64 = z.iter().zip(y).map(|(a, b)| 0.5 * (a - b).powi(2)).sum();
    let tv: f64 = z.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    fit + lambda * tv
}

/// Exhaustive TV-prox oracle: every pattern of difference signs in
/// {−1, 0, +1}^{n−1} fixes the merged groups and their jump signs, which
/// gives each group value in closed form. The true optimum is one of these
/// candidates, and every candidate is feasible, so the best true objective
/// over all candidates is the minimizer.
pub fn tv_oracle(y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    if n <= 1 {
        return y.to_vec();
    }
    let patterns = 3usize.pow((n - 1) as u32);
    let mut best = (f64::INFINITY, y.to_vec());
    for code in 0..patterns {
        let mut c = code;
        let signs: Vec<i32> = (0..n - 1)
            .map(|_| {
                let d = (c % 3) as i32 - 1;
                c /= 3;
                d
            })
            .collect();
        let mut z = vec![0.0; n];
        let mut start = 0;
        while start < n {
            let mut end = start;
            while end < n - 1 && signs[end] == 0 {
                end += 1;
            }
            let left = if start == 0 { 0.0 } else { signs[start - 1] as f64 };
            let right = if end == n - 1 { 0.0 } else { signs[end] as f64 };
            let len = (end - start + 1) as f64;
            let sum: f64 = y[start..=end].iter().sum();
            let value = (sum - lambda * (left - right)) / len;
            z[start..=end].fill(value);
            start = end + 1;
        }
        let f = tv_objective(&z, y, lambda);
        if f < best.0 {
            best = (f, z);
        }
    }
    best.1
}

/// Brute-force active-set oracle for the projection onto
/// `{eps ≤ z₁, z_j + eps ≤ z_{j+1}, z_k + eps ≤ T}`.
///
/// Constraint `i` (0 = lower end, 1..k−1 = gaps, k = upper end) is either
/// active or not. Each choice gives an equality-constrained least-squares
/// problem with a closed-form solution; the best feasible one wins.
pub fn projection_oracle(v: &[f64], horizon: f64, eps: f64) -> Option<Vec<f64>> {
    let k = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (k + 1)) {
        let active = |i: usize| mask & (1 << i) != 0;
        let mut z = vec![0.0; k];
        let mut start = 0;
        while start < k {
            let mut end = start;
            while end + 1 < k && active(end + 1) {
                end += 1;
            }
            // z_j = c + (j − start)·eps on the group
            let offsets: Vec<f64> = (start..=end).map(|j| (j - start) as f64 * eps).collect();
            let c = if start == 0 && active(0) {
                eps
            } else if end == k - 1 && active(k) {
                horizon - eps - offsets[end - start]
            } else {
                (start..=end).map(|j| v[j] - offsets[j - start]).sum::<f64>() / offsets.len() as f64
            };
            for j in start..=end {
                z[j] = c + offsets[j - start];
            }
            start = end + 1;
        }
        let tol = 1e-12 * (1.0 + horizon.abs());
        let feasible = z[0] >= eps - tol
            && z.windows(2).all(|w| w[1] - w[0] >= eps - tol)
            && z[k - 1] <= horizon - eps + tol;
        if !feasible {
            continue;
        }
        let f: f64 = z.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, z));
        }
    }
    best.map(|(_, z)| z)
}

/// Sorted switch points near `center`, perturbed by up to `radius` and kept
/// at least `gap` apart inside `(0, horizon)`.
pub fn perturbed_switches(rng: &mut impl Rng, center: &[f64], radius: f64, horizon: f64, gap: f64) -> Vec<f64> {
    loop {
        let s: Vec<f64> = center.iter().map(|c| c + rng.random_range(-radius..radius)).collect();
        let ok = s[0] > gap
            && s.windows(2).all(|w| w[1] - w[0] > gap)
            && *s.last().unwrap() < horizon - gap;
        if ok {
            return s;
        }
    }
}
