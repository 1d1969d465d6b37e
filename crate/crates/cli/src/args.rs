use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "spa", version, about = "Switch-point optimization for bang-bang and singular control problems")]
pub struct Cli {
    /// Worker threads for sweeps, finite differences and profiles (1 = sequential).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize switch points; writes report.json and trajectory.csv.
    Solve(SolveArgs),
    /// TV-regularized Euler solve and structure detection; writes structure.json and u_profile.csv.
    Warmstart(WarmArgs),
    /// Compare the analytic gradient with central differences.
    Gradcheck(CheckArgs),
    /// Tabulate dC/ds over a grid (single-switch problems); writes derivative_profile.csv.
    Profile(ProfileArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ProblemArgs {
    /// catalyst1, catalyst2, jacobson, bressan or goddard.
    #[arg(long)]
    pub problem: String,

    /// Problem case; for catalyst selects the state-only (1) or costate (2) singular law.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case: Option<u8>,

    /// Horizon (fixed-time problems) or initial guess of T (free-time problems).
    /// `solve` accepts a comma list and sweeps over it.
    #[arg(long = "T", value_delimiter = ',')]
    pub horizon: Vec<f64>,

    /// Initial switch points, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub s0: Option<Vec<f64>>,

    /// Initial costate, comma separated (Case 2).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub p0: Option<Vec<f64>>,

    /// Integrator relative and absolute tolerance. `solve` accepts a comma list.
    #[arg(long, value_delimiter = ',', default_value = "1e-8")]
    pub ode_tol: Vec<f64>,

    /// Output directory.
    #[arg(long, env = "SPA_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct TvArgs {
    /// Euler mesh intervals.
    #[arg(long = "N", default_value_t = 100)]
    pub n_intervals: usize,

    /// TV weight.
    #[arg(long, default_value_t = 1e-3)]
    pub rho_tv: f64,

    #[arg(long, default_value_t = 20_000)]
    pub tv_max_iters: usize,
}

#[derive(Debug, Args, Clone)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// Stationarity tolerance of the optimizer.
    #[arg(long, default_value_t = 1e-8)]
    pub opt_tol: f64,

    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,

    /// Secant iteration on dC/ds (single-switch problems).
    #[arg(long)]
    pub secant: bool,

    /// Secant starting pair; defaults to (s0, s0 + T/100).
    #[arg(long, value_delimiter = ',', num_args = 1, requires = "secant")]
    pub bracket: Option<Vec<f64>>,

    /// Start from the detected TV warm-start structure instead of s0/p0.
    #[arg(long, conflicts_with = "secant")]
    pub warmstart: bool,

    #[command(flatten)]
    pub tv: TvArgs,
}

#[derive(Debug, Args, Clone)]
pub struct WarmArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[command(flatten)]
    pub tv: TvArgs,

    /// Expected number of switches; more detected jumps set `flagged`.
    #[arg(long)]
    pub expect: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct CheckArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,

    #[arg(long, default_value_t = 1e-5)]
    pub rel_tol: f64,

    #[arg(long, default_value_t = 1e-8)]
    pub abs_tol: f64,
}

#[derive(Debug, Args, Clone)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// `start:end:count` or a comma list of switch points.
    #[arg(long)]
    pub grid: String,
}
