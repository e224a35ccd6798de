//! Structural properties of computed trajectories, each reduced to a scalar
//! margin and a pass flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::graph::Graph;
use crate::solver::Trajectory;

use super::{range, weighted_lq, AnalysisError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub check: String,
    pub pass: bool,
    /// Worst observed violation in the units of the check; nonpositive
    /// values mean no violation.
    pub margin: f64,
    pub params: BTreeMap<String, Value>,
    /// Config hashes of the trajectories involved.
    pub trajectory_ref: Vec<String>,
}

impl PropertyReport {
    fn new(check: &str, margin: f64, tol: f64, trajs: &[&Trajectory]) -> Self {
        let mut params = BTreeMap::new();
        params.insert("tol".to_string(), Value::from(tol));
        Self {
            check: check.to_string(),
            pass: margin <= tol,
            margin,
            params,
            trajectory_ref: trajs.iter().map(|t| t.meta.config_hash.clone()).collect(),
        }
    }

    fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

fn check_tol(tol: f64) -> Result<(), AnalysisError> {
    if tol >= 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(range(
            "tol",
            format!("tolerance must be finite and nonnegative, got {tol}"),
        ))
    }
}

fn check_traj(g: &Graph, t: &Trajectory) -> Result<(), AnalysisError> {
    for s in &t.states {
        s.check_domain(g)?;
    }
    Ok(())
}

/// Length of the common prefix of two sample grids; errors if the grids
/// disagree anywhere on it.
fn aligned(a: &Trajectory, b: &Trajectory) -> Result<usize, AnalysisError> {
    let n = a.len().min(b.len());
    for k in 0..n {
        let (s, t) = (a.times[k], b.times[k]);
        if (s - t).abs() > 1e-9 * s.abs().max(t.abs()).max(1.0) {
            return Err(AnalysisError::Misaligned(format!(
                "sample {k} is at t = {s} in one trajectory and t = {t} in the other"
            )));
        }
    }
    Ok(n)
}

/// Largest relative drift `|M(t) − M(0)|/max(|M(0)|, 1)` of the ν-mass.
pub fn check_mass_conservation(
    g: &Graph,
    traj: &Trajectory,
    tol: f64,
) -> Result<PropertyReport, AnalysisError> {
    check_tol(tol)?;
    check_traj(g, traj)?;
    let nu = g.nu_slice();
    let mass = |k: usize| -> f64 {
        traj.states[k]
            .values()
            .iter()
            .zip(nu)
            .map(|(a, w)| a * w)
            .sum()
    };
    let m0 = mass(0);
    let scale = m0.abs().max(1.0);
    let drift = (0..traj.len())
        .map(|k| (mass(k) - m0).abs() / scale)
        .fold(0.0f64, f64::max);
    Ok(PropertyReport::new("mass_conservation", drift, tol, &[traj]).with("initial_mass", m0))
}

/// Largest increase `d_{j+1} − d_j` of `d_j = ‖a(t_j) − b(t_j)‖_{ℓ²_ν}`.
pub fn check_contraction(
    g: &Graph,
    a: &Trajectory,
    b: &Trajectory,
    tol: f64,
) -> Result<PropertyReport, AnalysisError> {
    check_tol(tol)?;
    check_traj(g, a)?;
    check_traj(g, b)?;
    let n = aligned(a, b)?;
    let nu = g.nu_slice();
    let dist: Vec<f64> = (0..n)
        .map(|k| {
            let diff: Vec<f64> = a.states[k]
                .values()
                .iter()
                .zip(b.states[k].values())
                .map(|(x, y)| x - y)
                .collect();
            weighted_lq(&diff, nu, 2.0)
        })
        .collect();
    let margin = dist.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    Ok(PropertyReport::new("contraction", margin, tol, &[a, b])
        .with("samples", n)
        .with("initial_distance", dist.first().copied().unwrap_or(0.0)))
}

/// Largest `lower(t, v) − upper(t, v)`.
pub fn check_order_preservation(
    g: &Graph,
    lower: &Trajectory,
    upper: &Trajectory,
    tol: f64,
) -> Result<PropertyReport, AnalysisError> {
    check_tol(tol)?;
    check_traj(g, lower)?;
    check_traj(g, upper)?;
    let n = aligned(lower, upper)?;
    let margin = max_excess(lower, upper, n, &vec![true; g.node_count()]);
    Ok(PropertyReport::new("order_preservation", margin, tol, &[lower, upper]).with("samples", n))
}

/// For nonnegative data the Dirichlet flow on a subset stays below the
/// Neumann flow on the same graph; reports the largest `dir(t, v) − neu(t, v)`
/// over all nodes (the Dirichlet solution is zero outside its subset).
pub fn check_domination(
    g: &Graph,
    dirichlet: &Trajectory,
    neumann: &Trajectory,
    tol: f64,
) -> Result<PropertyReport, AnalysisError> {
    check_tol(tol)?;
    check_traj(g, dirichlet)?;
    check_traj(g, neumann)?;
    let n = aligned(dirichlet, neumann)?;
    let margin = max_excess(dirichlet, neumann, n, &vec![true; g.node_count()]);
    Ok(PropertyReport::new("domination", margin, tol, &[dirichlet, neumann]).with("samples", n))
}

fn max_excess(lo: &Trajectory, hi: &Trajectory, n: usize, mask: &[bool]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for k in 0..n {
        for ((x, y), &m) in lo.states[k]
            .values()
            .iter()
            .zip(hi.states[k].values())
            .zip(mask)
        {
            if m {
                worst = worst.max(x - y);
            }
        }
    }
    worst
}

/// Largest increase of `t ↦ ‖φ(t)‖` between consecutive samples, relative to
/// `max(‖φ(0)‖, 1)`. `q` is 1, 2 or infinity; for infinity the unweighted
/// supremum is used, since the ν-weighted one is not monotone along the flow.
pub fn check_lq_monotonicity(
    g: &Graph,
    traj: &Trajectory,
    q: f64,
    tol: f64,
) -> Result<PropertyReport, AnalysisError> {
    check_tol(tol)?;
    check_traj(g, traj)?;
    if !(q == 1.0 || q == 2.0 || q == f64::INFINITY) {
        return Err(range(
            "q",
            format!("supported norm indices are 1, 2 and infinity, got {q}"),
        ));
    }
    let nu = g.nu_slice();
    let norms: Vec<f64> = traj
        .states
        .iter()
        .map(|s| {
            if q.is_infinite() {
                s.values().iter().fold(0.0f64, |m, a| m.max(a.abs()))
            } else {
                weighted_lq(s.values(), nu, q)
            }
        })
        .collect();
    let scale = norms[0].max(1.0);
    let margin = norms
        .windows(2)
        .map(|w| (w[1] - w[0]) / scale)
        .fold(0.0f64, f64::max);
    let label = if q.is_infinite() {
        Value::from("inf")
    } else {
        Value::from(q)
    };
    Ok(PropertyReport::new("lq_monotonicity", margin, tol, &[traj]).with("q", label))
}

/// `margin = −min φ(t, v)`; passes when the minimum is at least `−tol`.
pub fn check_positivity(
    g: &Graph,
    traj: &Trajectory,
    tol: f64,
) -> Result<PropertyReport, AnalysisError> {
    check_tol(tol)?;
    check_traj(g, traj)?;
    let min = traj
        .states
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .fold(f64::INFINITY, f64::min);
    Ok(PropertyReport::new("positivity", -min, tol, &[traj]).with("min_value", min))
}
