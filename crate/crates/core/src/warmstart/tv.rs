/// Exact minimizer of `½‖z − y‖² + λ Σ|z_{j+1} − z_j|`.
///
/// Condat's direct algorithm: a single forward scan that maintains the
/// admissible range of the current segment value and backtracks to the
/// segment start whenever it must be closed.
pub fn tv_prox(signal: &[f64], lambda: f64) -> Vec<f64> {
    let n = signal.len();
    if n <= 1 || lambda <= 0.0 {
        return signal.to_vec();
    }
    let y = signal;
    let mut out = vec![0.0; n];
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = y[0] - lambda;
    let mut vmax = y[0] + lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k;
                vmin = y[k];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k;
                vmax = y[k];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                out[k0..=k].fill(vmin);
                return out;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -lambda {
            loop {
                out[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k;
            kplus = k;
            vmin = y[k];
            vmax = vmin + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += y[k + 1] - vmax;
        if umax > lambda {
            loop {
                out[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k;
            kplus = k;
            vmax = y[k];
            vmin = vmax - 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (k - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= -lambda {
            kplus = k;
            vmax += (umax + lambda) / (k - k0 + 1) as f64;
            umax = -lambda;
        }
    }
}

/// `Σ|z_{j+1} − z_j|`.
pub fn total_variation(z: &[f64]) -> f64 {
    z.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}
