//! Diagnostics computed along sampled trajectories.

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::solver::Trajectory;

use super::{range, AnalysisError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: [f64; 2],
    /// Least-squares slope of `log ψ` against `log t`.
    pub slope: f64,
    /// `sup ψ(t)·t^{2/(p−2)}` over the window.
    pub bound_constant: f64,
    /// The rate `−2/(p−2)` the slope is compared with.
    pub predicted_slope: f64,
    pub samples: usize,
}

/// Fits `ψ(t) = ‖φ(t) − f̄₀‖²_{ℓ²_ν}` on `window`, where `f̄₀` is the
/// ν-weighted mean of the initial state.
pub fn decay_fit(
    g: &Graph,
    traj: &Trajectory,
    p: f64,
    window: [f64; 2],
) -> Result<DecayFit, AnalysisError> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(range("p", format!("decay rates need p > 2, got {p}")));
    }
    let [t_min, t_max] = window;
    if !(t_min > 0.0 && t_max > t_min) {
        return Err(range(
            "window",
            format!("need 0 < t_min < t_max, got [{t_min}, {t_max}]"),
        ));
    }
    traj.states[0].check_domain(g)?;
    let nu = g.nu_slice();
    let mean = traj.states[0]
        .values()
        .iter()
        .zip(nu)
        .map(|(a, w)| a * w)
        .sum::<f64>()
        / g.total_nu();
    let rate = 2.0 / (p - 2.0);
    let tol = 1e-9 * t_max;
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(&t, _)| t >= t_min - tol && t <= t_max + tol)
        .map(|(&t, s)| {
            let psi: f64 = s
                .values()
                .iter()
                .zip(nu)
                .map(|(a, w)| w * (a - mean) * (a - mean))
                .sum();
            (t, psi)
        })
        .collect();
    if pts.len() < 2 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 2,
            got: pts.len(),
        });
    }
    if pts.iter().all(|&(_, psi)| psi == 0.0) {
        return Err(AnalysisError::ZeroSignal);
    }
    let logs: Vec<(f64, f64)> = pts
        .iter()
        .filter(|&&(_, psi)| psi > 0.0)
        .map(|&(t, psi)| (t.ln(), psi.ln()))
        .collect();
    if logs.len() < 2 {
        return Err(AnalysisError::ZeroSignal);
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / k;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|l| (l.0 - mx) * (l.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|l| (l.0 - mx) * (l.0 - mx)).sum();
    let bound_constant = pts
        .iter()
        .map(|&(t, psi)| psi * t.powf(rate))
        .fold(0.0f64, f64::max);
    Ok(DecayFit {
        window,
        slope: sxy / sxx,
        bound_constant,
        predicted_slope: -rate,
        samples: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyInequality {
    /// Largest `C̄` with `E′ + C̄ E^{1−p/d} ≤ 0` at every interior sample
    /// where `E > 0`; infinite when no sample constrains it.
    pub cbar: f64,
    pub holds: bool,
    /// Largest `E(t)/(E(0)^{p/d} − C̄pt/d)₊^{d/p} − 1` over samples, with
    /// `E(t) = 0` counting as satisfied once the bracket vanishes.
    pub integrated_margin: f64,
    pub samples_used: usize,
}

/// Checks `dE/dt + C̄ E^{p/p*} ≤ 0` for `E(t) = Σ (φ(t,v) − k)₊^m ν(v)`,
/// `m = d(2/p − 1)`, using centered differences on the sample grid (first and
/// last samples excluded).
pub fn energy_inequality_check(
    g: &Graph,
    traj: &Trajectory,
    d: f64,
    p: f64,
    k: f64,
) -> Result<EnergyInequality, AnalysisError> {
    let e = super::exponents(d, p)?;
    if !(k >= 0.0) {
        return Err(range("k", format!("level must be nonnegative, got {k}")));
    }
    if traj.len() < 3 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 3,
            got: traj.len(),
        });
    }
    traj.states[0].check_domain(g)?;
    let nu = g.nu_slice();
    let energy: Vec<f64> = traj
        .states
        .iter()
        .map(|s| {
            s.values()
                .iter()
                .zip(nu)
                .map(|(a, w)| w * (a - k).max(0.0).powf(e.m))
                .sum()
        })
        .collect();
    let expo = 1.0 - p / d;
    let top = energy.iter().copied().fold(0.0f64, f64::max);
    // differences touching numerically vanished energy carry no information
    let floor = 1e-12 * top;
    let mut cbar = f64::INFINITY;
    let mut used = 0;
    for j in 1..energy.len() - 1 {
        let (a, b, c) = (energy[j - 1], energy[j], energy[j + 1]);
        if a <= floor || b <= floor || c <= floor {
            continue;
        }
        let de = (c - a) / (traj.times[j + 1] - traj.times[j - 1]);
        cbar = cbar.min(-de / b.powf(expo));
        used += 1;
    }
    let mut integrated_margin = f64::NEG_INFINITY;
    if cbar.is_finite() && cbar > 0.0 {
        let e0 = energy[0].powf(p / d);
        for (t, en) in traj.times.iter().zip(&energy) {
            let bracket = (e0 - cbar * p * t / d).max(0.0).powf(d / p);
            let m = if bracket > 0.0 {
                en / bracket - 1.0
            } else if *en <= floor {
                -1.0
            } else {
                f64::INFINITY
            };
            integrated_margin = integrated_margin.max(m);
        }
    }
    Ok(EnergyInequality {
        cbar,
        holds: cbar > 0.0,
        integrated_margin: if integrated_margin.is_finite() {
            integrated_margin
        } else {
            0.0
        },
        samples_used: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub order: usize,
    /// `max |D^k φ|` over the sampled interior.
    pub max_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HolderVerdict {
    /// Estimate within ±0.15 of the predicted exponent.
    Sharp,
    /// Estimate above the predicted exponent minus 0.15 (smoother locally).
    Consistent,
    /// Estimate more than 0.15 below the predicted exponent.
    Rougher,
    /// Integer `p`: no Hölder break expected and none seen (estimate ≥ 0.85).
    NoBreak,
    /// Integer `p` but the estimate fell below 0.85.
    Break,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub order: usize,
    pub exponent: f64,
    /// `p − ⌊p⌋` for non-integer `p`, `None` for integer `p`.
    pub predicted: Option<f64>,
    pub verdict: HolderVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub node: String,
    pub spacing: f64,
    pub orders: Vec<OrderEstimate>,
    pub holder: Option<HolderEstimate>,
}

/// Tolerance of the Hölder verdicts.
pub const HOLDER_TOLERANCE: f64 = 0.15;

/// Divided differences of `t ↦ φ(t, node)` up to order `min(⌊p⌋, 4)` and a
/// Hölder exponent of the highest one.
///
/// The exponent is the log-log slope of the second-difference modulus
/// `ω(δ) = max_t |D(t+δ) − 2D(t) + D(t−δ)|` over dyadic `δ = 2^j·h`,
/// `j = 2..`, which is insensitive to the smooth (affine) part of `D`.
pub fn regularity_probe(
    traj: &Trajectory,
    p: f64,
    node: NodeId,
    node_label: &str,
) -> Result<RegularityReport, AnalysisError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(range("p", format!("need p > 1, got {p}")));
    }
    let n = traj.len();
    let top = (p.floor() as usize).clamp(1, 4);
    let needed = top + 1 + 2 * 64;
    if n < needed {
        return Err(AnalysisError::InsufficientSamples { needed, got: n });
    }
    if node.0 >= traj.states[0].len() {
        return Err(range(
            "node",
            format!("index {} outside the trajectory", node.0),
        ));
    }
    let h = traj.times[1] - traj.times[0];
    let uniform = traj
        .times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    if !uniform {
        return Err(AnalysisError::Misaligned(
            "regularity probe needs uniform sampling".into(),
        ));
    }
    let mut series: Vec<f64> = traj.states.iter().map(|s| s[node]).collect();
    let mut orders = Vec::with_capacity(top);
    for order in 1..=top {
        // centered divided difference of order `order`, shifted by one sample each time
        series = series.windows(2).map(|w| (w[1] - w[0]) / h).collect();
        orders.push(OrderEstimate {
            order,
            max_abs: series.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        });
    }
    let holder = holder_exponent(&series).map(|exponent| {
        let frac = p - p.floor();
        let predicted = (frac > 1e-12).then_some(frac);
        let verdict = match predicted {
            Some(a) if (exponent - a).abs() <= HOLDER_TOLERANCE => HolderVerdict::Sharp,
            Some(a) if exponent >= a - HOLDER_TOLERANCE => HolderVerdict::Consistent,
            Some(_) => HolderVerdict::Rougher,
            None if exponent >= 1.0 - HOLDER_TOLERANCE => HolderVerdict::NoBreak,
            None => HolderVerdict::Break,
        };
        HolderEstimate {
            order: top,
            exponent,
            predicted,
            verdict,
        }
    });
    Ok(RegularityReport {
        node: node_label.to_string(),
        spacing: h,
        orders,
        holder,
    })
}

/// Slope of `log ω(δ)` over dyadic lags `4, 8, …` samples, using lags up to a
/// sixteenth of the series.
fn holder_exponent(d: &[f64]) -> Option<f64> {
    let mut pts = Vec::new();
    let mut lag = 4usize;
    while 16 * lag <= d.len() {
        let omega = (lag..d.len() - lag)
            .map(|i| (d[i + lag] - 2.0 * d[i] + d[i - lag]).abs())
            .fold(0.0f64, f64::max);
        if omega > 0.0 {
            pts.push(((lag as f64).ln(), omega.ln()));
        }
        lag *= 2;
    }
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|x| x.0).sum::<f64>() / k;
    let my = pts.iter().map(|x| x.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|x| (x.0 - mx) * (x.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|x| (x.0 - mx) * (x.0 - mx)).sum();
    Some(sxy / sxx)
}
