//! Adaptive Dormand–Prince 5(4) integration of piecewise-smooth systems.
//!
//! The right-hand side is smooth on each segment `[b_j, b_{j+1}]` of a known
//! breakpoint list and may jump across breakpoints. The integrator restarts
//! at every breakpoint: the last step of a segment is clipped to land on the
//! boundary and the next segment starts with a fresh initial-step estimate and
//! a fresh error history, so no accepted step ever straddles a discontinuity.
//!
//! Backward integration is done by reflecting time inside each segment
//! (`t = b_{j+1} - r`), so a single forward stepping loop serves both
//! directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, OdeError};

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// PI step-size controller (nominal exponent 1/5).
const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - PI_BETA * 0.75;
const FAC_SHRINK_LIMIT: f64 = 5.0; // h may shrink by at most 5x per step
const FAC_GROW_LIMIT: f64 = 0.1; // and grow by at most 10x

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step at each segment start; `None` selects it automatically.
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-8,
            h_init: None,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 500_000,
        }
    }
}

impl IntegratorSettings {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.h_min > 0.0
            && self.h_min <= self.h_max
            && self.max_steps >= 1
            && self.h_init.is_none_or(|h| h > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "integrator settings violate rel_tol>0, abs_tol>0, 0<h_min<=h_max, max_steps>=1: {self:?}"
            )))
        }
    }
}

/// A system `dy/dt = rhs(j, t, y)` that is smooth on each segment `j`.
pub struct PiecewiseOde<F> {
    dim: usize,
    breakpoints: Vec<f64>,
    rhs: F,
}

impl<F> PiecewiseOde<F>
where
    F: Fn(usize, f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, breakpoints: Vec<f64>, rhs: F) -> Result<Self, Error> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidConfig(
                "a piecewise system needs at least two breakpoints".into(),
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || breakpoints.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidConfig(format!(
                "breakpoints must be finite and strictly increasing: {breakpoints:?}"
            )));
        }
        Ok(Self {
            dim,
            breakpoints,
            rhs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segment_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn eval(&self, segment: usize, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.rhs)(segment, t, y, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// An accepted step endpoint. `deriv` is `dy/dt` in natural time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPoint {
    pub t: f64,
    pub segment: usize,
    pub state: Vec<f64>,
    pub deriv: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    pub direction: Direction,
    /// Uniform re-sampling for reports; never used for gradients.
    pub sample_times: Vec<f64>,
    pub sample_states: Vec<Vec<f64>>,
    /// State at every breakpoint, in increasing breakpoint order.
    pub breakpoint_states: Vec<Vec<f64>>,
    /// Accepted step endpoints in traversal order, including each segment start.
    pub steps: Vec<StepPoint>,
}

impl DenseTrajectory {
    /// State where the integration ended.
    pub fn terminal_state(&self) -> &[f64] {
        match self.direction {
            Direction::Forward => self.breakpoint_states.last().unwrap(),
            Direction::Backward => self.breakpoint_states.first().unwrap(),
        }
    }

    /// Cubic Hermite interpolation between accepted steps.
    pub fn interpolate(&self, t: f64) -> Option<Vec<f64>> {
        let mut ordered: Vec<&StepPoint> = self.steps.iter().collect();
        if self.direction == Direction::Backward {
            ordered.reverse();
        }
        hermite_at(&ordered, t)
    }
}

fn hermite_at(ordered: &[&StepPoint], t: f64) -> Option<Vec<f64>> {
    let first = ordered.first()?;
    let last = ordered.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    // first index whose time is >= t
    let hi = ordered.partition_point(|p| p.t < t);
    if hi == 0 {
        return Some(first.state.clone());
    }
    let (a, b) = (ordered[hi - 1], ordered[hi]);
    let h = b.t - a.t;
    if h <= 0.0 {
        return Some(b.state.clone());
    }
    let th = (t - a.t) / h;
    let th2 = th * th;
    let th3 = th2 * th;
    let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
    let h10 = th3 - 2.0 * th2 + th;
    let h01 = -2.0 * th3 + 3.0 * th2;
    let h11 = th3 - th2;
    Some(
        (0..a.state.len())
            .map(|i| {
                h00 * a.state[i] + h10 * h * a.deriv[i] + h01 * b.state[i] + h11 * h * b.deriv[i]
            })
            .collect(),
    )
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

struct SegmentRun<'a> {
    settings: &'a IntegratorSettings,
    steps_taken: &'a mut usize,
}

impl SegmentRun<'_> {
    /// Integrates `dy/dr = g(r, y)` over `r ∈ [0, length]`, calling `accept`
    /// at `r = 0` and after every accepted step. `time_of` maps `r` to
    /// natural time for error reporting.
    fn run<G, A, M>(
        &mut self,
        g: G,
        length: f64,
        y: &mut [f64],
        mut accept: A,
        time_of: M,
    ) -> Result<(), OdeError>
    where
        G: Fn(f64, &[f64], &mut [f64]),
        A: FnMut(f64, &[f64], &[f64]),
        M: Fn(f64) -> f64,
    {
        let s = self.settings;
        let n = y.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut k5 = vec![0.0; n];
        let mut k6 = vec![0.0; n];
        let mut k7 = vec![0.0; n];
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];

        if !all_finite(y) {
            return Err(OdeError::NonFiniteState { t: time_of(0.0) });
        }
        g(0.0, y, &mut k1);
        if !all_finite(&k1) {
            return Err(OdeError::NonFiniteState { t: time_of(0.0) });
        }
        accept(0.0, y, &k1);

        let mut h = match s.h_init {
            Some(h0) => h0,
            None => initial_step(&g, y, &k1, s),
        }
        .min(s.h_max)
        .min(length);
        let mut r = 0.0;
        let mut facold: f64 = 1e-4;
        let mut rejected = false;

        while r < length {
            if *self.steps_taken >= s.max_steps {
                return Err(OdeError::StepLimitExceeded {
                    max_steps: s.max_steps,
                    t: time_of(r),
                });
            }
            *self.steps_taken += 1;

            let remaining = length - r;
            let last = h >= remaining * (1.0 - 4.0 * f64::EPSILON);
            if last {
                h = remaining;
            }

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            g(r + C2 * h, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            g(r + C3 * h, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            g(r + C4 * h, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            g(r + C5 * h, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let r_end = if last { length } else { r + h };
            g(r_end, &ytmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            g(r_end, &ynew, &mut k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sk = s.abs_tol + s.rel_tol * y[i].abs().max(ynew[i].abs());
                err += (e / sk) * (e / sk);
            }
            let err = (err / n.max(1) as f64).sqrt();

            if !err.is_finite() || !all_finite(&ynew) || !all_finite(&k7) {
                // Overflow inside the stages: retreat and retry.
                h *= 0.25;
                rejected = true;
                if h < s.h_min {
                    return Err(OdeError::NonFiniteState { t: time_of(r) });
                }
                continue;
            }

            let fac11 = err.powf(EXPO1);
            if err <= 1.0 {
                let fac = (fac11 / facold.powf(PI_BETA) / SAFETY)
                    .clamp(FAC_GROW_LIMIT, FAC_SHRINK_LIMIT);
                let mut hnew = h / fac;
                facold = err.max(1e-4);
                r = r_end;
                y.copy_from_slice(&ynew);
                std::mem::swap(&mut k1, &mut k7);
                accept(r, y, &k1);
                if rejected {
                    hnew = hnew.min(h);
                }
                rejected = false;
                h = hnew.min(s.h_max);
            } else {
                h /= FAC_SHRINK_LIMIT.min(fac11 / SAFETY);
                rejected = true;
                if h < s.h_min {
                    return Err(OdeError::StepUnderflow {
                        t: time_of(r),
                        h,
                        h_min: s.h_min,
                    });
                }
            }
        }
        Ok(())
    }
}

fn initial_step<G>(g: &G, y0: &[f64], f0: &[f64], s: &IntegratorSettings) -> f64
where
    G: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..n {
        let sk = s.abs_tol + s.rel_tol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        0.01 * (dny / dnf).sqrt()
    };
    h = h.min(s.h_max);
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + h * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    g(h, &y1, &mut f1);
    if !all_finite(&f1) {
        return (h * 1e-3).max(s.h_min);
    }
    let mut der2 = 0.0;
    for i in 0..n {
        let sk = s.abs_tol + s.rel_tol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.abs().max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(s.h_max).max(s.h_min)
}

/// Integrates a piecewise system across all of its segments.
///
/// `sample_count` uniform samples (including both endpoints, when ≥ 2) are
/// interpolated from the accepted steps for reporting.
pub fn integrate_piecewise<F>(
    ode: &PiecewiseOde<F>,
    x_start: &[f64],
    direction: Direction,
    settings: &IntegratorSettings,
    sample_count: usize,
) -> Result<DenseTrajectory, Error>
where
    F: Fn(usize, f64, &[f64], &mut [f64]),
{
    settings.validate()?;
    if x_start.len() != ode.dim {
        return Err(Error::InvalidConfig(format!(
            "initial state has dimension {}, system has {}",
            x_start.len(),
            ode.dim
        )));
    }
    let bps = &ode.breakpoints;
    let nseg = ode.segment_count();
    let mut y = x_start.to_vec();
    let mut breakpoint_states = vec![Vec::new(); bps.len()];
    let mut steps = Vec::new();
    let mut steps_taken = 0usize;

    let order: Vec<usize> = match direction {
        Direction::Forward => (0..nseg).collect(),
        Direction::Backward => (0..nseg).rev().collect(),
    };
    match direction {
        Direction::Forward => breakpoint_states[0] = y.clone(),
        Direction::Backward => breakpoint_states[nseg] = y.clone(),
    }

    for j in order {
        let (a, b) = (bps[j], bps[j + 1]);
        let length = b - a;
        let sign = match direction {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        };
        let time_of = |r: f64| -> f64 {
            let t = match direction {
                Direction::Forward => {
                    if r >= length {
                        b
                    } else {
                        a + r
                    }
                }
                Direction::Backward => {
                    if r >= length {
                        a
                    } else {
                        b - r
                    }
                }
            };
            t.clamp(a, b)
        };
        let g = |r: f64, yy: &[f64], dy: &mut [f64]| {
            ode.eval(j, time_of(r), yy, dy);
            if sign < 0.0 {
                dy.iter_mut().for_each(|d| *d = -*d);
            }
        };
        let accept = |r: f64, yy: &[f64], dy: &[f64]| {
            steps.push(StepPoint {
                t: time_of(r),
                segment: j,
                state: yy.to_vec(),
                deriv: dy.iter().map(|d| sign * d).collect(),
            });
        };
        let mut run = SegmentRun {
            settings,
            steps_taken: &mut steps_taken,
        };
        run.run(g, length, &mut y, accept, time_of)?;
        match direction {
            Direction::Forward => breakpoint_states[j + 1] = y.clone(),
            Direction::Backward => breakpoint_states[j] = y.clone(),
        }
    }

    let (sample_times, sample_states) = resample(&steps, direction, bps, sample_count);
    Ok(DenseTrajectory {
        direction,
        sample_times,
        sample_states,
        breakpoint_states,
        steps,
    })
}

fn resample(
    steps: &[StepPoint],
    direction: Direction,
    bps: &[f64],
    sample_count: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    if sample_count == 0 || steps.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut ordered: Vec<&StepPoint> = steps.iter().collect();
    if direction == Direction::Backward {
        ordered.reverse();
    }
    let (t0, t1) = (bps[0], *bps.last().unwrap());
    let times: Vec<f64> = if sample_count == 1 {
        vec![t0]
    } else {
        (0..sample_count)
            .map(|i| {
                if i + 1 == sample_count {
                    t1
                } else {
                    t0 + (t1 - t0) * i as f64 / (sample_count - 1) as f64
                }
            })
            .collect()
    };
    let states = times
        .iter()
        .map(|&t| hermite_at(&ordered, t).expect("sample inside the integrated interval"))
        .collect();
    (times, states)
}

/// Integrates the system together with `∫ integrand dt`.
///
/// The quadrature rides along as one extra state, so it is under the same
/// error control as the system. The returned scalar is the integral over the
/// whole interval in natural orientation (`∫_{b_0}^{b_last}`) for either
/// direction. The trajectory excludes the quadrature component.
pub fn integrate_with_quadrature<F, Q>(
    ode: &PiecewiseOde<F>,
    x_start: &[f64],
    integrand: Q,
    direction: Direction,
    settings: &IntegratorSettings,
    sample_count: usize,
) -> Result<(DenseTrajectory, f64), Error>
where
    F: Fn(usize, f64, &[f64], &mut [f64]),
    Q: Fn(usize, f64, &[f64]) -> f64,
{
    let n = ode.dim;
    let augmented = PiecewiseOde::new(
        n + 1,
        ode.breakpoints.clone(),
        |j: usize, t: f64, y: &[f64], dy: &mut [f64]| {
            ode.eval(j, t, &y[..n], &mut dy[..n]);
            dy[n] = integrand(j, t, &y[..n]);
        },
    )?;
    let mut start = x_start.to_vec();
    start.push(0.0);
    let mut traj = integrate_piecewise(&augmented, &start, direction, settings, sample_count)?;
    let q = *traj.terminal_state().last().unwrap();
    let integral = match direction {
        Direction::Forward => q,
        Direction::Backward => -q,
    };
    let strip = |v: &mut Vec<f64>| {
        v.truncate(n);
    };
    traj.sample_states.iter_mut().for_each(strip);
    traj.breakpoint_states.iter_mut().for_each(strip);
    for sp in &mut traj.steps {
        sp.state.truncate(n);
        sp.deriv.truncate(n);
    }
    Ok((traj, integral))
}
