//! Norms, exponent bookkeeping, inequality checks and trajectory diagnostics.

mod checks;
mod dynamics;
mod functional;

pub use checks::{
    check_contraction, check_domination, check_lq_monotonicity, check_mass_conservation,
    check_order_preservation, check_positivity, PropertyReport,
};
pub use dynamics::{
    decay_fit, energy_inequality_check, regularity_probe, DecayFit, EnergyInequality,
    HolderEstimate, HolderVerdict, OrderEstimate, RegularityReport,
};
pub use functional::{
    poincare_check, poincare_constant, sobolev_check, sobolev_ratio, sobolev_reference,
    SobolevFamily, SobolevReference, SobolevReport, SobolevSample,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ulf_constant, Graph, GraphError, NodeFunction};
use crate::operator::{p_laplacian, Exponent, OperatorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("parameter `{name}` out of range: {detail}")]
    ParameterRange { name: &'static str, detail: String },
    #[error("trajectories are not sampled on a common grid: {0}")]
    Misaligned(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("signal is identically zero on the window")]
    ZeroSignal,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

fn range(name: &'static str, detail: impl Into<String>) -> AnalysisError {
    AnalysisError::ParameterRange {
        name,
        detail: detail.into(),
    }
}

/// `‖f‖_{ℓ^q_ν} = (Σ |f|^q ν)^{1/q}` for `1 ≤ q < ∞`; for `q = ∞` the
/// weighted supremum `sup |f(v)|·ν(v)`. The unweighted supremum is
/// [`sup_norm`].
pub fn lq_norm(g: &Graph, f: &NodeFunction, q: f64) -> Result<f64, AnalysisError> {
    f.check_domain(g)?;
    if q.is_nan() || q < 1.0 {
        return Err(range(
            "q",
            format!("norm index must be at least 1, got {q}"),
        ));
    }
    let x = f.values();
    let nu = g.nu_slice();
    if q == f64::INFINITY {
        return Ok(x
            .iter()
            .zip(nu)
            .fold(0.0f64, |m, (a, w)| m.max(a.abs() * w)));
    }
    Ok(weighted_lq(x, nu, q))
}

pub(crate) fn weighted_lq(x: &[f64], w: &[f64], q: f64) -> f64 {
    // scale by the largest entry so high powers of tiny values do not underflow
    let top = x.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let s: f64 = x
        .iter()
        .zip(w)
        .map(|(a, w)| w * (a.abs() / top).powf(q))
        .sum();
    top * s.powf(1.0 / q)
}

/// Unweighted `max_v |f(v)|`.
pub fn sup_norm(f: &NodeFunction) -> f64 {
    f.values().iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

/// `Σ_v f(v) ν(v)`.
pub fn mass(g: &Graph, f: &NodeFunction) -> Result<f64, AnalysisError> {
    f.check_domain(g)?;
    Ok(f.values()
        .iter()
        .zip(g.nu_slice())
        .map(|(a, w)| a * w)
        .sum())
}

/// Exponents attached to `(d, p)` in the extinction argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub d: f64,
    pub p: f64,
    /// `m = d(2/p − 1)`
    pub m: f64,
    /// `s = (m + p − 2)/p`
    pub s: f64,
    /// `p* = dp/(d − p)`
    pub p_star: f64,
    /// `q = p/(p − 1)`
    pub q: f64,
}

/// Requires `d > 1` and `1 < p < 2d/(d+1)`, equivalently `m > 1`.
pub fn exponents(d: f64, p: f64) -> Result<Exponents, AnalysisError> {
    if !(d > 1.0 && d.is_finite()) {
        return Err(range(
            "d",
            format!("dimension must be finite and above 1, got {d}"),
        ));
    }
    Exponent::new(p).map_err(|_| range("p", format!("exponent must exceed 1, got {p}")))?;
    let m = d * (2.0 / p - 1.0);
    if !(m > 1.0) {
        return Err(range(
            "m",
            format!(
                "m = d(2/p - 1) = {m} must exceed 1, i.e. p < 2d/(d+1) = {}",
                2.0 * d / (d + 1.0)
            ),
        ));
    }
    Ok(Exponents {
        d,
        p,
        m,
        s: (m + p - 2.0) / p,
        p_star: sobolev_exponent(d, p)?,
        q: p / (p - 1.0),
    })
}

/// `p* = dp/(d − p)` for `1 ≤ p < d`.
pub fn sobolev_exponent(d: f64, p: f64) -> Result<f64, AnalysisError> {
    if !(d > 1.0 && d.is_finite()) {
        return Err(range(
            "d",
            format!("dimension must be finite and above 1, got {d}"),
        ));
    }
    if !(p >= 1.0 && p < d) {
        return Err(range("p", format!("need 1 <= p < d = {d}, got {p}")));
    }
    Ok(d * p / (d - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionBound {
    #[serde(rename = "T0")]
    pub t0: f64,
    pub d: f64,
    pub p: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// `‖f0‖` in `ℓ^m_ν`, `m = d(2−p)/p`.
    pub f0_norm: f64,
    #[serde(rename = "Cbar")]
    pub cbar: f64,
}

/// `T0 = d/(p·C̄)·‖f0‖^{2−p}` with `C̄ = C^p m(m−1)(d−p)^p/(m+p−2)^p`.
pub fn extinction_bound(
    d: f64,
    p: f64,
    c: f64,
    f0_norm: f64,
) -> Result<ExtinctionBound, AnalysisError> {
    if !(d >= 2.0) {
        return Err(range("d", format!("the bound needs d >= 2, got {d}")));
    }
    let e = exponents(d, p)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(range("C", format!("constant must be positive, got {c}")));
    }
    if !(f0_norm > 0.0 && f0_norm.is_finite()) {
        return Err(range(
            "f0_norm",
            format!("norm must be positive, got {f0_norm}"),
        ));
    }
    let m = e.m;
    let cbar = c.powf(p) * m * (m - 1.0) * (d - p).powf(p) / (m + p - 2.0).powf(p);
    Ok(ExtinctionBound {
        t0: d / (p * cbar) * f0_norm.powf(2.0 - p),
        d,
        p,
        c,
        f0_norm,
        cbar,
    })
}

/// Limit of the bound as `p → 1+`: `‖f0‖_{ℓ^d_ν}/(C(d−1))`.
pub fn extinction_bound_limit(d: f64, c: f64, f0_norm_d: f64) -> Result<f64, AnalysisError> {
    if !(d >= 2.0) {
        return Err(range("d", format!("the bound needs d >= 2, got {d}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(range("C", format!("constant must be positive, got {c}")));
    }
    Ok(f0_norm_d / (c * (d - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub holds: bool,
    /// `LHS/RHS − 1`.
    pub margin: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Relative slack allowed for rounding in [`lemma_fol_check`].
pub const LEMMA_ROUNDING: f64 = 1e-12;

/// Checks `(a^{m−1} − b^{m−1})/(a−b) ≥ (m−1)/s^p · ((a^s − b^s)/(a−b))^p`
/// for `a > b > 0`, `1 ≤ p < 2d/(d+1)`.
///
/// Both sides are formed from `expm1`/`ln_1p` of `a/b − 1`, which keeps the
/// ratio accurate when `a` and `b` nearly coincide.
pub fn lemma_fol_check(a: f64, b: f64, p: f64, d: f64) -> Result<LemmaCheck, AnalysisError> {
    if !(b > 0.0 && a > b && a.is_finite()) {
        return Err(range("a, b", format!("need a > b > 0, got a={a}, b={b}")));
    }
    if !(d > 1.0 && d.is_finite()) {
        return Err(range("d", format!("dimension must exceed 1, got {d}")));
    }
    if !(p >= 1.0) {
        return Err(range("p", format!("need p >= 1, got {p}")));
    }
    let m = d * (2.0 / p - 1.0);
    if !(m > 1.0) {
        return Err(range(
            "m",
            format!("need p < 2d/(d+1) so that m > 1, got m = {m}"),
        ));
    }
    let s = (m + p - 2.0) / p;
    let delta = (a - b) / b;
    let l = delta.ln_1p();
    // (a^k − b^k)/(a − b) = b^{k−1}·expm1(k·l)/δ
    let q1 = (m - 1.0) * l;
    let q1 = q1.exp_m1() / delta;
    let q2 = (s * l).exp_m1() / delta;
    // b-powers cancel in the ratio because (s−1)p = m−2
    let ratio = q1 * s.powf(p) / ((m - 1.0) * q2.powf(p));
    let lhs = b.powf(m - 2.0) * q1;
    let rhs = (m - 1.0) / s.powf(p) * (b.powf(s - 1.0) * q2).powf(p);
    let margin = ratio - 1.0;
    Ok(LemmaCheck {
        holds: margin >= -LEMMA_ROUNDING,
        margin,
        lhs,
        rhs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorBound {
    pub holds: bool,
    /// `‖L_p u‖_{ℓ^{q/(p−1)}_ν}`
    pub lhs: f64,
    /// `2^{p−1}/K · ‖u‖^{p−1}_{ℓ^q_ν}` with `K` the ULF constant.
    pub rhs: f64,
    /// `lhs/rhs`, zero when both vanish.
    pub ratio: f64,
}

/// Checks `‖L_p u‖_{ℓ^{q/(p−1)}_ν} ≤ (2^{p−1}/K)‖u‖^{p−1}_{ℓ^q_ν}`.
///
/// With `s = q/(p−1) ≥ 1`, Jensen's inequality over the μ-weights at each
/// node, `|a−b|^q ≤ 2^{q−1}(|a|^q+|b|^q)` and two uses of `μ(v) ≤ ν(v)/K`
/// give `Σ ν|L_p u|^s ≤ 2^q K^{−s} Σ ν|u|^q`.
pub fn operator_bound_check(
    g: &Graph,
    p: Exponent,
    q: f64,
    u: &NodeFunction,
) -> Result<OperatorBound, AnalysisError> {
    let pv = p.value();
    if !(q.is_finite() && q >= 1.0 && q >= pv - 1.0) {
        return Err(range("q", format!("need finite q >= max(1, p-1), got {q}")));
    }
    let k = ulf_constant(g);
    if !(k > 0.0 && k.is_finite()) {
        return Err(range(
            "K",
            format!("ULF constant must be positive and finite, got {k}"),
        ));
    }
    let lu = p_laplacian(g, p, u)?;
    let s = q / (pv - 1.0);
    let lhs = lq_norm(g, &lu, s)?;
    let rhs = 2f64.powf(pv - 1.0) / k * lq_norm(g, u, q)?.powf(pv - 1.0);
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(OperatorBound {
        holds: lhs <= rhs * (1.0 + 1e-12),
        lhs,
        rhs,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{lattice_box, path, two_node, GraphBuilder, LatticeSpec, NodeId};

    #[test]
    fn norm_examples() {
        let mut b = GraphBuilder::new();
        b.add_node("a", 1.0).unwrap();
        b.add_node("b", 3.0).unwrap();
        let g = b.build().unwrap();
        let f = NodeFunction::constant(&g, 1.0);
        assert_eq!(lq_norm(&g, &f, 1.0).unwrap(), 4.0);
        assert_eq!(lq_norm(&g, &f, f64::INFINITY).unwrap(), 3.0);
        assert_eq!(sup_norm(&f), 1.0);
        let z = NodeFunction::zeros(&g);
        for q in [1.0, 2.0, 7.5, f64::INFINITY] {
            assert_eq!(lq_norm(&g, &z, q).unwrap(), 0.0);
        }
        assert!(lq_norm(&g, &f, 0.5).is_err());
        let tiny = NodeFunction::constant(&g, 1e-200);
        assert!((lq_norm(&g, &tiny, 4.0).unwrap() / 1e-200 - 4f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn mass_examples() {
        let g = path(3).unwrap();
        assert_eq!(mass(&g, &NodeFunction::zeros(&g)).unwrap(), 0.0);
        let f = NodeFunction::new(&g, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(mass(&g, &f).unwrap(), 4.0);
        let mut b = GraphBuilder::new();
        let v = b.add_node("v", 2.0).unwrap();
        let g = b.build().unwrap();
        assert_eq!(mass(&g, &NodeFunction::delta(&g, v).unwrap()).unwrap(), 2.0);
    }

    #[test]
    fn exponent_examples() {
        let e = exponents(2.0, 1.25).unwrap();
        assert!((e.m - 1.2).abs() < 1e-15);
        assert!((e.s - 0.36).abs() < 1e-15);
        assert!((e.p_star - 10.0 / 3.0).abs() < 1e-15);
        assert!((e.q - 5.0).abs() < 1e-15);
        assert!(matches!(
            exponents(3.0, 1.5),
            Err(AnalysisError::ParameterRange { name: "m", .. })
        ));
        assert_eq!(sobolev_exponent(2.0, 1.0).unwrap(), 2.0);
        assert!(sobolev_exponent(2.0, 2.0).is_err());
        assert!(exponents(1.0, 1.2).is_err());
    }

    #[test]
    fn bound_examples() {
        let b = extinction_bound(2.0, 1.25, 1.0, 1.0).unwrap();
        let want = 2.0 * 0.45f64.powf(1.25) / (1.25 * 1.2 * 0.2 * 0.75f64.powf(1.25));
        assert!((b.t0 - want).abs() < 1e-12 * want);
        let b2 = extinction_bound(2.0, 1.25, 1.0, 2.0).unwrap();
        assert!((b2.t0 / b.t0 - 2f64.powf(0.75)).abs() < 1e-12);
        assert_eq!(extinction_bound_limit(2.0, 1.0, 1.0).unwrap(), 1.0);
        let near = extinction_bound(2.0, 1.0 + 1e-7, 1.0, 1.0).unwrap();
        assert!((near.t0 - 1.0).abs() < 1e-5);
        assert!(extinction_bound(1.5, 1.1, 1.0, 1.0).is_err());
        assert!(extinction_bound(2.0, 1.25, 0.0, 1.0).is_err());
        assert!(extinction_bound(2.0, 1.25, 1.0, 0.0).is_err());
    }

    #[test]
    fn lemma_examples() {
        let c = lemma_fol_check(2.0, 1.0, 1.25, 2.0).unwrap();
        assert!(c.holds && c.margin > 0.0);
        assert!((c.lhs / c.rhs - 1.0 - c.margin).abs() < 1e-12);
        let near = lemma_fol_check(1.0 + 1e-6, 1.0, 1.25, 2.0).unwrap();
        assert!(near.holds);
        // second-order expansion: ratio − 1 ≈ p(p−1)(s−1)²δ²/24 · ... is tiny
        assert!(near.margin >= 0.0 && near.margin < 1e-9, "{}", near.margin);
        let edge = lemma_fol_check(3.0, 1.0, 1.0, 2.0).unwrap();
        assert!(edge.margin.abs() < 1e-14);
        assert!(lemma_fol_check(1.0, 2.0, 1.25, 2.0).is_err());
    }

    #[test]
    fn operator_bound_examples() {
        let g = two_node();
        let p = Exponent::new(3.0).unwrap();
        let u = NodeFunction::new(&g, vec![0.0, 1.0]).unwrap();
        let b = operator_bound_check(&g, p, 2.0, &u).unwrap();
        assert_eq!((b.lhs, b.rhs), (2.0, 4.0));
        assert!(b.holds);
        let z = operator_bound_check(&g, p, 2.0, &NodeFunction::zeros(&g)).unwrap();
        assert!(z.holds && z.lhs == 0.0 && z.rhs == 0.0);
        assert!(operator_bound_check(&g, p, 1.5, &u).is_err());

        let box_ = lattice_box(&LatticeSpec::new(2, 3, true)).unwrap();
        let u = NodeFunction::delta(&box_, NodeId(4)).unwrap();
        assert!(operator_bound_check(&box_, p, 4.0, &u).unwrap().holds);
    }
}
