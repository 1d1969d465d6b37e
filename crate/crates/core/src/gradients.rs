//! Objective value and exact gradient with respect to the switch points, the
//! initial costate and the terminal time, from one forward sweep of the
//! (generalized) state and one backward sweep of the (generalized) costate.
//!
//! All sweeps run on the rescaled clock `τ = t/T ∈ [0, 1]` with dynamics
//! `T·f_j`, so the terminal-time derivative comes out of the same backward
//! pass as a quadrature of the unscaled Hamiltonian. Switch points are
//! exchanged with callers in time units.
//!
//! The backward pass re-integrates the state jointly with the costate and
//! resets it to the stored forward checkpoint at every switch point.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odeint::{
    integrate_piecewise, integrate_with_quadrature, DenseTrajectory, Direction,
    IntegratorSettings, PiecewiseOde,
};
use crate::problem::{
    default_min_gap, dot, row_times, DerivativeSource, GeneralizedArgs, ProblemCase, ProblemDef,
    SwitchConfig, DEFAULT_FD_STEP,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub ode: IntegratorSettings,
    /// Minimum switch separation in time units; `None` means `1e-6·T`.
    pub min_gap: Option<f64>,
    /// Relative step for finite-difference fallbacks (law Jacobians, `∇𝓗`).
    pub fd_step: f64,
    /// Uniform samples kept for reports. Zero during optimization.
    pub sample_count: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            ode: IntegratorSettings::default(),
            min_gap: None,
            fd_step: DEFAULT_FD_STEP,
            sample_count: 0,
        }
    }
}

impl EvalSettings {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            ode: IntegratorSettings::with_tolerance(tol),
            ..Self::default()
        }
    }

    pub fn min_gap_for(&self, horizon: f64) -> f64 {
        self.min_gap.unwrap_or_else(|| default_min_gap(horizon))
    }
}

/// Forward-sweep output. Breakpoints include `0` and `T`.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t_final: f64,
    pub switch_times: Vec<f64>,
    pub tau_breaks: Vec<f64>,
    /// Generalized state (`x`, or `x‖p` in Case 2) at every breakpoint.
    pub checkpoints: Vec<Vec<f64>>,
    pub objective: f64,
    /// Worst feasibility margin of each phase over the accepted steps.
    pub feasibility_margins: Vec<f64>,
    /// Dense trajectory on the `τ` clock.
    pub trajectory: DenseTrajectory,
}

impl TrajectoryRecord {
    pub fn state_at_break(&self, i: usize, n: usize) -> &[f64] {
        &self.checkpoints[i][..n]
    }

    pub fn costate_at_break(&self, i: usize, n: usize) -> Option<&[f64]> {
        let c = &self.checkpoints[i];
        (c.len() == 2 * n).then(|| &c[n..])
    }

    pub fn terminal_state(&self, n: usize) -> &[f64] {
        self.state_at_break(self.checkpoints.len() - 1, n)
    }
}

/// State, costate, and generalized costate at one time. In Case 1 `p` is
/// absent, `y1` is the costate and `y2` is identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedPoint {
    pub x: Vec<f64>,
    pub p: Option<Vec<f64>>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CostateRecord {
    /// One point per breakpoint, increasing in time.
    pub checkpoints: Vec<GeneralizedPoint>,
    /// `∫₀¹ H dτ` (Case 1) or `∫₀¹ 𝓗 dτ` (Case 2) with the unscaled Hamiltonian.
    pub hamiltonian_integral: f64,
    /// Backward-sweep samples in increasing physical time. Each switch time
    /// appears twice, once per adjacent phase.
    pub samples: Vec<CostateSample>,
    pub derivative_source: DerivativeSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostateSample {
    pub t: f64,
    pub phase: usize,
    /// `x‖p` (Case 1) or `x‖p‖y₁‖y₂` (Case 2).
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianJump {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub objective: f64,
    pub t_final: f64,
    /// `∂C/∂s_j`, time units.
    pub d_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_p0: Option<Vec<f64>>,
    /// `dC/dT` with the switch points fixed on the `τ` clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_t: Option<f64>,
    pub feasibility_margins: Vec<f64>,
    pub hamiltonian_jumps: Vec<HamiltonianJump>,
    pub derivative_source: DerivativeSource,
}

impl GradientBundle {
    /// `∂C/∂T` with the switch points fixed in time units:
    /// `d_T − Σ_j s_j ∂C/∂s_j / T`.
    pub fn d_t_fixed_switches(&self, s: &[f64]) -> Option<f64> {
        self.d_t
            .map(|dt| dt - s.iter().zip(&self.d_s).map(|(sj, g)| sj * g).sum::<f64>() / self.t_final)
    }
}

/// Terminal time implied by the problem and the configuration.
pub fn resolve_horizon(prob: &ProblemDef, cfg: &SwitchConfig) -> Result<f64> {
    match (prob.horizon.is_free(), cfg.t_final) {
        (true, Some(t)) => Ok(t),
        (true, None) => Err(Error::InvalidConfig(format!(
            "{} has a free terminal time; the configuration must carry T",
            prob.name
        ))),
        (false, None) => Ok(prob.horizon.nominal()),
        (false, Some(t)) if t == prob.horizon.nominal() => Ok(t),
        (false, Some(t)) => Err(Error::InvalidConfig(format!(
            "{} has fixed terminal time {}, configuration asks for {t}",
            prob.name,
            prob.horizon.nominal()
        ))),
    }
}

/// Checks ordering with minimum gap, `p₀` presence, and `T` positivity.
pub fn validate_config(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    t_final: f64,
    min_gap: f64,
) -> Result<()> {
    let k = prob.switch_count();
    if cfg.s.len() != k {
        return Err(Error::InvalidConfig(format!(
            "{} has {k} switch points, configuration has {}",
            prob.name,
            cfg.s.len()
        )));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidConfig(format!("terminal time {t_final} is not positive")));
    }
    // tiny relative slack so that a gap of exactly `min_gap` passes
    let slack = 1e-9 * min_gap;
    let mut prev = 0.0;
    for (j, &sj) in cfg.s.iter().chain(std::iter::once(&t_final)).enumerate() {
        if !sj.is_finite() || sj - prev < min_gap - slack {
            let what = if j < k {
                format!("s{}", j + 1)
            } else {
                "T".to_string()
            };
            return Err(Error::InvalidSwitchOrder(format!(
                "need 0 < s1 < ... < sk < T with gaps >= {min_gap:e}; {what} = {sj} follows {prev} \
                 (switch points {:?}, T = {t_final})",
                cfg.s
            )));
        }
        prev = sj;
    }
    match (prob.case, &cfg.p0) {
        (ProblemCase::One, Some(_)) => Err(Error::InvalidConfig(
            "an initial costate is only used by Case-2 problems".into(),
        )),
        (ProblemCase::Two, None) => Err(Error::InvalidConfig(
            "Case-2 problems need an initial costate p0".into(),
        )),
        (ProblemCase::Two, Some(p0)) if p0.len() != prob.n() => Err(Error::InvalidConfig(
            format!("p0 has length {}, expected {}", p0.len(), prob.n()),
        )),
        _ => Ok(()),
    }
}

/// Records the first callback failure so the integrator can be stopped with
/// a NaN and the real cause reported afterwards.
struct Failure(RefCell<Option<Error>>);

impl Failure {
    fn new() -> Self {
        Self(RefCell::new(None))
    }

    fn capture<T>(&self, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.0.borrow_mut().get_or_insert(e);
                None
            }
        }
    }

    fn finish<T>(self, r: Result<T>) -> Result<T> {
        match self.0.into_inner() {
            Some(e) => Err(e),
            None => r,
        }
    }
}

fn tau_breaks(s: &[f64], t_final: f64) -> Vec<f64> {
    let mut b = Vec::with_capacity(s.len() + 2);
    b.push(0.0);
    b.extend(s.iter().map(|sj| sj / t_final));
    b.push(1.0);
    b
}

pub fn forward_sweep(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    settings: &EvalSettings,
) -> Result<TrajectoryRecord> {
    let t_final = resolve_horizon(prob, cfg)?;
    forward_sweep_at(prob, cfg, t_final, settings)
}

/// Forward sweep at an explicit terminal time (also for fixed-horizon
/// problems, which lets the `T`-derivative be checked on any problem).
pub fn forward_sweep_at(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    t_final: f64,
    settings: &EvalSettings,
) -> Result<TrajectoryRecord> {
    prob.validate()?;
    validate_config(prob, cfg, t_final, settings.min_gap_for(t_final))?;
    let n = prob.n();
    let breaks = tau_breaks(&cfg.s, t_final);
    let failure = Failure::new();
    let dynamics = &prob.dynamics;

    let (traj, dim) = match prob.case {
        ProblemCase::One => {
            let ode = PiecewiseOde::new(n, breaks.clone(), |j, tau, y: &[f64], dy: &mut [f64]| {
                let t = tau * t_final;
                match failure.capture(prob.phase_dynamics(j, t, y, None)) {
                    Some(f) => dy.iter_mut().zip(f).for_each(|(d, fi)| *d = t_final * fi),
                    None => dy.fill(f64::NAN),
                }
            })?;
            let r = integrate_piecewise(&ode, &prob.x0, Direction::Forward, &settings.ode, settings.sample_count);
            (failure.finish(r)?, n)
        }
        ProblemCase::Two => {
            let ode =
                PiecewiseOde::new(2 * n, breaks.clone(), |j, tau, y: &[f64], dy: &mut [f64]| {
                    let t = tau * t_final;
                    let (x, p) = y.split_at(n);
                    let Some(u) = failure.capture(prob.phase_control(j, t, x, Some(p))) else {
                        dy.fill(f64::NAN);
                        return;
                    };
                    let f = dynamics.rhs(x, &u);
                    let pf = row_times(p, &dynamics.jac_x(x, &u));
                    for i in 0..n {
                        dy[i] = t_final * f[i];
                        dy[n + i] = -t_final * pf[i];
                    }
                })?;
            let mut start = prob.x0.clone();
            start.extend_from_slice(cfg.p0.as_deref().unwrap());
            let r = integrate_piecewise(&ode, &start, Direction::Forward, &settings.ode, settings.sample_count);
            (failure.finish(r)?, 2 * n)
        }
    };
    debug_assert_eq!(traj.breakpoint_states[0].len(), dim);

    let mut margins = vec![f64::INFINITY; prob.phases.len()];
    for sp in &traj.steps {
        let t = sp.t * t_final;
        let (x, p) = sp.state.split_at(n);
        let p = (!p.is_empty()).then_some(p);
        let m = prob.control_feasibility(sp.segment, t, x, p)?;
        let worst = m.into_iter().fold(f64::INFINITY, f64::min);
        margins[sp.segment] = margins[sp.segment].min(worst);
    }

    let checkpoints = traj.breakpoint_states.clone();
    let objective = dynamics.objective(&checkpoints.last().unwrap()[..n]);
    if !objective.is_finite() {
        return Err(Error::Ode(crate::error::OdeError::NonFiniteState { t: t_final }));
    }
    Ok(TrajectoryRecord {
        t_final,
        switch_times: cfg.s.clone(),
        tau_breaks: breaks,
        checkpoints,
        objective,
        feasibility_margins: margins,
        trajectory: traj,
    })
}

pub fn backward_sweep(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    fwd: &TrajectoryRecord,
    settings: &EvalSettings,
) -> Result<CostateRecord> {
    match prob.case {
        ProblemCase::One => backward_case1(prob, fwd, settings),
        ProblemCase::Two => backward_case2(prob, cfg, fwd, settings),
    }
}

fn segment_samples(settings: &EvalSettings, len: f64) -> usize {
    if settings.sample_count == 0 {
        0
    } else {
        ((settings.sample_count as f64 * len).ceil() as usize).max(2)
    }
}

fn collect_samples(out: &mut Vec<CostateSample>, traj: &DenseTrajectory, phase: usize, t_final: f64) {
    // segments are visited last-to-first; prepend to keep time increasing
    let mut seg: Vec<CostateSample> = traj
        .sample_times
        .iter()
        .zip(&traj.sample_states)
        .map(|(tau, s)| CostateSample {
            t: tau * t_final,
            phase,
            state: s.clone(),
        })
        .collect();
    seg.append(out);
    *out = seg;
}

fn backward_case1(
    prob: &ProblemDef,
    fwd: &TrajectoryRecord,
    settings: &EvalSettings,
) -> Result<CostateRecord> {
    let n = prob.n();
    let t_final = fwd.t_final;
    let dynamics = &prob.dynamics;
    let nb = fwd.tau_breaks.len();
    let mut p = dynamics.objective_grad(fwd.terminal_state(n));
    let mut points = vec![None; nb];
    points[nb - 1] = Some(GeneralizedPoint {
        x: fwd.terminal_state(n).to_vec(),
        p: None,
        y1: p.clone(),
        y2: vec![0.0; n],
    });
    let mut integral = 0.0;
    let mut samples = Vec::new();

    for j in (0..nb - 1).rev() {
        let failure = Failure::new();
        let breaks = vec![fwd.tau_breaks[j], fwd.tau_breaks[j + 1]];
        let ode = PiecewiseOde::new(2 * n, breaks, |_, tau, y: &[f64], dy: &mut [f64]| {
            let t = tau * t_final;
            let (x, pp) = y.split_at(n);
            let f = failure.capture(prob.phase_dynamics(j, t, x, None));
            let jac = failure.capture(prob.phase_state_jacobian(j, t, x, settings.fd_step));
            let (Some(f), Some(jac)) = (f, jac) else {
                dy.fill(f64::NAN);
                return;
            };
            let pj = row_times(pp, &jac);
            for i in 0..n {
                dy[i] = t_final * f[i];
                dy[n + i] = -t_final * pj[i];
            }
        })?;
        let integrand = |_: usize, tau: f64, y: &[f64]| -> f64 {
            let (x, pp) = y.split_at(n);
            failure
                .capture(prob.phase_dynamics(j, tau * t_final, x, None))
                .map_or(f64::NAN, |f| dot(pp, &f))
        };
        let mut start = fwd.state_at_break(j + 1, n).to_vec();
        start.extend_from_slice(&p);
        let seg_len = fwd.tau_breaks[j + 1] - fwd.tau_breaks[j];
        let r = integrate_with_quadrature(
            &ode,
            &start,
            integrand,
            Direction::Backward,
            &settings.ode,
            segment_samples(settings, seg_len),
        );
        let (traj, q) = failure.finish(r)?;
        integral += q;
        p = traj.terminal_state()[n..].to_vec();
        collect_samples(&mut samples, &traj, j, t_final);
        points[j] = Some(GeneralizedPoint {
            x: fwd.state_at_break(j, n).to_vec(),
            p: None,
            y1: p.clone(),
            y2: vec![0.0; n],
        });
    }
    Ok(CostateRecord {
        checkpoints: points.into_iter().map(Option::unwrap).collect(),
        hamiltonian_integral: integral,
        samples,
        derivative_source: DerivativeSource::Analytic,
    })
}

fn backward_case2(
    prob: &ProblemDef,
    _cfg: &SwitchConfig,
    fwd: &TrajectoryRecord,
    settings: &EvalSettings,
) -> Result<CostateRecord> {
    let n = prob.n();
    let t_final = fwd.t_final;
    let dynamics = &prob.dynamics;
    let nb = fwd.tau_breaks.len();
    let last = nb - 1;
    let mut y1 = dynamics.objective_grad(fwd.terminal_state(n));
    let mut y2 = vec![0.0; n];
    let mut points = vec![None; nb];
    let point_at = |i: usize, y1: &[f64], y2: &[f64]| GeneralizedPoint {
        x: fwd.state_at_break(i, n).to_vec(),
        p: fwd.costate_at_break(i, n).map(<[f64]>::to_vec),
        y1: y1.to_vec(),
        y2: y2.to_vec(),
    };
    points[last] = Some(point_at(last, &y1, &y2));
    let mut integral = 0.0;
    let mut samples = Vec::new();
    let source = RefCell::new(DerivativeSource::Analytic);

    for j in (0..last).rev() {
        let failure = Failure::new();
        let breaks = vec![fwd.tau_breaks[j], fwd.tau_breaks[j + 1]];
        let ode = PiecewiseOde::new(4 * n, breaks, |_, tau, y: &[f64], dy: &mut [f64]| {
            let t = tau * t_final;
            let (x, rest) = y.split_at(n);
            let (p, rest) = rest.split_at(n);
            let (yy1, yy2) = rest.split_at(n);
            let Some(u) = failure.capture(prob.phase_control(j, t, x, Some(p))) else {
                dy.fill(f64::NAN);
                return;
            };
            let args = GeneralizedArgs { x, p, y1: yy1, y2: yy2 };
            let Some((gx, gp, src)) = failure.capture(prob.case2_derivs(j, t, &args, settings.fd_step))
            else {
                dy.fill(f64::NAN);
                return;
            };
            if src == DerivativeSource::FiniteDifference {
                *source.borrow_mut() = src;
            }
            let f = dynamics.rhs(x, &u);
            let pf = row_times(p, &dynamics.jac_x(x, &u));
            for i in 0..n {
                dy[i] = t_final * f[i];
                dy[n + i] = -t_final * pf[i];
                dy[2 * n + i] = -t_final * gx[i];
                dy[3 * n + i] = -t_final * gp[i];
            }
        })?;
        let integrand = |_: usize, tau: f64, y: &[f64]| -> f64 {
            let (x, rest) = y.split_at(n);
            let (p, rest) = rest.split_at(n);
            let (yy1, yy2) = rest.split_at(n);
            let args = GeneralizedArgs { x, p, y1: yy1, y2: yy2 };
            failure
                .capture(prob.generalized_hamiltonian(j, tau * t_final, &args))
                .unwrap_or(f64::NAN)
        };
        let mut start = fwd.checkpoints[j + 1].clone();
        start.extend_from_slice(&y1);
        start.extend_from_slice(&y2);
        let seg_len = fwd.tau_breaks[j + 1] - fwd.tau_breaks[j];
        let r = integrate_with_quadrature(
            &ode,
            &start,
            integrand,
            Direction::Backward,
            &settings.ode,
            segment_samples(settings, seg_len),
        );
        let (traj, q) = failure.finish(r)?;
        integral += q;
        let end = traj.terminal_state();
        y1 = end[2 * n..3 * n].to_vec();
        y2 = end[3 * n..].to_vec();
        collect_samples(&mut samples, &traj, j, t_final);
        points[j] = Some(point_at(j, &y1, &y2));
    }
    Ok(CostateRecord {
        checkpoints: points.into_iter().map(Option::unwrap).collect(),
        hamiltonian_integral: integral,
        samples,
        derivative_source: source.into_inner(),
    })
}

/// Hamiltonian on phase `j` at a checkpoint: `p·f_j` or `𝓗_j`.
fn phase_hamiltonian(
    prob: &ProblemDef,
    j: usize,
    t: f64,
    pt: &GeneralizedPoint,
) -> Result<f64> {
    match &pt.p {
        None => Ok(dot(&pt.y1, &prob.phase_dynamics(j, t, &pt.x, None)?)),
        Some(p) => prob.generalized_hamiltonian(
            j,
            t,
            &GeneralizedArgs {
                x: &pt.x,
                p,
                y1: &pt.y1,
                y2: &pt.y2,
            },
        ),
    }
}

/// Objective and full gradient at an explicit terminal time, plus the sweep
/// records.
pub fn evaluate_at(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    t_final: f64,
    settings: &EvalSettings,
) -> Result<(GradientBundle, TrajectoryRecord, CostateRecord)> {
    let fwd = forward_sweep_at(prob, cfg, t_final, settings)?;
    let bwd = backward_sweep(prob, cfg, &fwd, settings)?;
    let k = prob.switch_count();
    let mut jumps = Vec::with_capacity(k);
    for j in 1..=k {
        let t = cfg.s[j - 1];
        let pt = &bwd.checkpoints[j];
        jumps.push(HamiltonianJump {
            left: phase_hamiltonian(prob, j - 1, t, pt)?,
            right: phase_hamiltonian(prob, j, t, pt)?,
        });
    }
    let d_s = jumps.iter().map(|h| h.left - h.right).collect();
    let d_p0 = match prob.case {
        ProblemCase::One => None,
        ProblemCase::Two => Some(bwd.checkpoints[0].y2.clone()),
    };
    let d_t = prob.horizon.is_free().then_some(bwd.hamiltonian_integral);
    let bundle = GradientBundle {
        objective: fwd.objective,
        t_final,
        d_s,
        d_p0,
        d_t,
        feasibility_margins: fwd.feasibility_margins.clone(),
        hamiltonian_jumps: jumps,
        derivative_source: bwd.derivative_source,
    };
    Ok((bundle, fwd, bwd))
}

pub fn evaluate_gradient(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    settings: &EvalSettings,
) -> Result<GradientBundle> {
    let t_final = resolve_horizon(prob, cfg)?;
    evaluate_at(prob, cfg, t_final, settings).map(|(b, _, _)| b)
}

/// Objective only (forward sweep), at an explicit terminal time.
pub fn objective_at(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    t_final: f64,
    settings: &EvalSettings,
) -> Result<f64> {
    let quiet = EvalSettings {
        sample_count: 0,
        ..*settings
    };
    forward_sweep_at(prob, cfg, t_final, &quiet).map(|r| r.objective)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeTimeCheck {
    /// `∫₀¹ H dτ` from the backward sweep.
    pub analytic: f64,
    /// Central difference of `C(T)` with the switch points fixed on the `τ` clock.
    pub finite_difference: f64,
}

/// Compares the Hamiltonian quadrature with a central difference of `C(T)`.
///
/// Works for fixed-horizon problems as well: they are simply evaluated on
/// the rescaled clock at neighbouring horizons.
pub fn free_time_gradient_check(
    prob: &ProblemDef,
    cfg: &SwitchConfig,
    settings: &EvalSettings,
    rel_delta: f64,
) -> Result<FreeTimeCheck> {
    let t_final = cfg.t_final.unwrap_or_else(|| prob.horizon.nominal());
    let (_, _, bwd) = evaluate_at(prob, cfg, t_final, settings)?;
    let delta = rel_delta * t_final.abs().max(1.0);
    let scaled = |t: f64| SwitchConfig {
        s: cfg.s.iter().map(|s| s / t_final * t).collect(),
        p0: cfg.p0.clone(),
        t_final: Some(t),
    };
    let up = objective_at(prob, &scaled(t_final + delta), t_final + delta, settings)?;
    let dn = objective_at(prob, &scaled(t_final - delta), t_final - delta, settings)?;
    Ok(FreeTimeCheck {
        analytic: bwd.hamiltonian_integral,
        finite_difference: (up - dn) / (2.0 * delta),
    })
}
