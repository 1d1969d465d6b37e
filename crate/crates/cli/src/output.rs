//! Report and CSV writers. Floats are written as `{:.16e}` (17 significant
//! digits), so every value round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use switchpoint::optimizer::ProfilePoint;
use switchpoint::warmstart::DiscreteControlProblem;

use crate::CliError;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::solver(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write(path, &text)
}

pub fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

/// `(t, x, u, p)`
pub type TrajectoryRow = (f64, Vec<f64>, Vec<f64>, Vec<f64>);

/// Rows of `t, x₁..x_n, u₁..u_m, p₁..p_n`.
pub fn write_trajectory(path: &Path, n: usize, m: usize, rows: &[TrajectoryRow]) -> Result<(), CliError> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("x", n))
        .chain(numbered("u", m))
        .chain(numbered("p", n))
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for (t, x, u, p) in rows {
        let line: Vec<String> = std::iter::once(*t).chain(x.iter().copied()).chain(u.iter().copied()).chain(p.iter().copied()).map(num).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write(path, &out)
}

/// Rows of `t, u₁..u_m` at the mesh nodes `t_j = j·h`.
pub fn write_u_profile(path: &Path, dcp: &DiscreteControlProblem) -> Result<(), CliError> {
    let m = dcp.u.first().map_or(0, Vec::len);
    let header: Vec<String> = std::iter::once("t".to_string()).chain(numbered("u", m)).collect();
    let mut out = header.join(",");
    out.push('\n');
    for (j, u) in dcp.u.iter().enumerate() {
        let line: Vec<String> = std::iter::once(dcp.node_time(j)).chain(u.iter().copied()).map(num).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write(path, &out)
}

/// Rows of `s, dC_ds, sign_change` with `sign_change` ∈ {0, 1}.
pub fn write_profile(path: &Path, points: &[ProfilePoint]) -> Result<(), CliError> {
    let mut out = String::from("s,dC_ds,sign_change\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", num(p.s), num(p.d_s), u8::from(p.sign_change));
    }
    write(path, &out)
}
