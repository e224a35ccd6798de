//! The nonlinear p-Laplacian and its energy.
//!
//! `L_p f(v) = (1/ν(v)) Σ_e ι_ve μ(e) g_p((Iᵀf)(e))` with `g_p(α) = |α|^{p−2}α`.
//! All kernels loop over the edge list in stored order and accumulate fluxes
//! into per-node buffers, so results are reproducible bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, NodeFunction, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("exponent p must be a finite number above 1, got {0}")]
    InvalidExponent(f64),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Exponent `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Exponent(f64);

impl Exponent {
    pub fn new(p: f64) -> Result<Self, OperatorError> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(OperatorError::InvalidExponent(p))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Hölder conjugate `q = p/(p−1)`.
    pub fn conjugate(self) -> f64 {
        self.0 / (self.0 - 1.0)
    }
}

impl TryFrom<f64> for Exponent {
    type Error = OperatorError;
    fn try_from(p: f64) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

impl From<Exponent> for f64 {
    fn from(p: Exponent) -> f64 {
        p.0
    }
}

/// `g_p(α) = |α|^{p−2} α`, with `g_p(0) = 0`.
#[inline]
pub fn g_p(p: Exponent, alpha: f64) -> f64 {
    let p = p.0;
    if alpha == 0.0 {
        0.0
    } else if p == 2.0 {
        alpha
    } else if p == 3.0 {
        alpha.abs() * alpha
    } else if p == 4.0 {
        alpha * alpha * alpha
    } else {
        alpha.abs().powf(p - 2.0) * alpha
    }
}

/// `|α|^p`.
#[inline]
pub(crate) fn abs_pow(p: f64, alpha: f64) -> f64 {
    if p == 2.0 {
        alpha * alpha
    } else {
        alpha.abs().powf(p)
    }
}

/// Node set `V_n` of a Dirichlet truncation, together with the absorption
/// weight of each node.
///
/// For `v ∈ V_n` the absorption is the halo mass of `v` plus the μ-mass of
/// explicit edges to nodes outside `V_n`; for `v ∉ V_n` it is the μ-mass of
/// edges into `V_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletTruncation {
    members: Vec<NodeId>,
    inside: Vec<bool>,
    absorption: Vec<f64>,
}

impl DirichletTruncation {
    pub fn new(g: &Graph, members: &[NodeId]) -> Result<Self, GraphError> {
        if members.is_empty() {
            return Err(GraphError::InvalidParameter(
                "Dirichlet truncation needs a nonempty node set".into(),
            ));
        }
        let inside = g.mask(members)?;
        let mut absorption: Vec<f64> = g
            .nodes()
            .map(|v| if inside[v.0] { g.halo(v) } else { 0.0 })
            .collect();
        for e in g.edges() {
            if inside[e.tail.0] != inside[e.head.0] {
                absorption[e.tail.0] += e.mu;
                absorption[e.head.0] += e.mu;
            }
        }
        let mut members = members.to_vec();
        members.sort();
        members.dedup();
        Ok(Self {
            members,
            inside,
            absorption,
        })
    }

    /// Truncation to the whole node set: absorption comes from halo only.
    pub fn whole(g: &Graph) -> Self {
        let members: Vec<NodeId> = g.nodes().collect();
        Self::new(g, &members).expect("graphs are nonempty")
    }

    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.inside[v.0]
    }

    pub fn inside_mask(&self) -> &[bool] {
        &self.inside
    }

    pub fn absorption(&self, v: NodeId) -> f64 {
        self.absorption[v.0]
    }

    pub fn absorption_slice(&self) -> &[f64] {
        &self.absorption
    }

    pub fn check_domain(&self, g: &Graph) -> Result<(), GraphError> {
        if self.inside.len() == g.node_count() {
            Ok(())
        } else {
            Err(GraphError::DomainMismatch {
                expected: g.node_count(),
                found: self.inside.len(),
            })
        }
    }
}

/// Boundary condition of an evolution or energy evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Boundary {
    /// Pure Neumann on the given finite graph; halo is ignored.
    #[default]
    Neumann,
    Dirichlet(DirichletTruncation),
}

impl Boundary {
    pub fn dirichlet(&self) -> Option<&DirichletTruncation> {
        match self {
            Boundary::Neumann => None,
            Boundary::Dirichlet(tr) => Some(tr),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Boundary::Neumann => "neumann",
            Boundary::Dirichlet(_) => "dirichlet",
        }
    }

    pub(crate) fn check_domain(&self, g: &Graph) -> Result<(), GraphError> {
        match self {
            Boundary::Neumann => Ok(()),
            Boundary::Dirichlet(tr) => tr.check_domain(g),
        }
    }
}

/// Neumann p-Laplacian on the finite graph `g`.
pub fn p_laplacian(g: &Graph, p: Exponent, f: &NodeFunction) -> Result<NodeFunction, GraphError> {
    f.check_domain(g)?;
    let mut out = vec![0.0; g.node_count()];
    neumann_into(g, p, f.values(), &mut out);
    Ok(NodeFunction::from_vec_unchecked(out))
}

/// Dirichlet-truncated p-Laplacian `L^(n)_p`.
///
/// Inside `V_n`: `(1/ν)[Σ_{w∈V_n} μ g_p(h(v)−h(w)) + g_p(h(v))·absorption(v)]`.
/// Outside: `−(1/ν) g_p(h(v)) Σ_{w∈V_n, w∼v} μ`.
pub fn truncated_p_laplacian(
    g: &Graph,
    tr: &DirichletTruncation,
    p: Exponent,
    h: &NodeFunction,
) -> Result<NodeFunction, GraphError> {
    h.check_domain(g)?;
    tr.check_domain(g)?;
    let mut out = vec![0.0; g.node_count()];
    truncated_into(g, tr, p, h.values(), &mut out);
    Ok(NodeFunction::from_vec_unchecked(out))
}

/// `L_p f` or `L^(n)_p f` depending on `bc`.
pub fn apply(
    g: &Graph,
    bc: &Boundary,
    p: Exponent,
    f: &NodeFunction,
) -> Result<NodeFunction, GraphError> {
    match bc {
        Boundary::Neumann => p_laplacian(g, p, f),
        Boundary::Dirichlet(tr) => truncated_p_laplacian(g, tr, p, f),
    }
}

pub(crate) fn neumann_into(g: &Graph, p: Exponent, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for e in g.edges() {
        let flux = e.mu * g_p(p, x[e.head.0] - x[e.tail.0]);
        out[e.head.0] += flux;
        out[e.tail.0] -= flux;
    }
    for (o, nu) in out.iter_mut().zip(g.nu_slice()) {
        *o /= nu;
    }
}

pub(crate) fn truncated_into(
    g: &Graph,
    tr: &DirichletTruncation,
    p: Exponent,
    x: &[f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let inside = &tr.inside;
    for e in g.edges() {
        if inside[e.tail.0] && inside[e.head.0] {
            let flux = e.mu * g_p(p, x[e.head.0] - x[e.tail.0]);
            out[e.head.0] += flux;
            out[e.tail.0] -= flux;
        }
    }
    for (v, o) in out.iter_mut().enumerate() {
        let a = tr.absorption[v];
        if a != 0.0 {
            let term = g_p(p, x[v]) * a;
            if inside[v] {
                *o += term;
            } else {
                *o = -term;
            }
        }
        *o /= g.nu_slice()[v];
    }
}

pub(crate) fn apply_into(g: &Graph, bc: &Boundary, p: Exponent, x: &[f64], out: &mut [f64]) {
    match bc {
        Boundary::Neumann => neumann_into(g, p, x, out),
        Boundary::Dirichlet(tr) => truncated_into(g, tr, p, x, out),
    }
}

/// p-energy `(1/p) Σ_e μ(e)|(Iᵀf)(e)|^p`. Under a Dirichlet truncation only
/// edges inside `V_n` count, and every member node adds
/// `(1/p)·absorption(v)·|f(v)|^p`.
pub fn energy(g: &Graph, bc: &Boundary, p: Exponent, f: &NodeFunction) -> Result<f64, GraphError> {
    f.check_domain(g)?;
    bc.check_domain(g)?;
    Ok(energy_raw(g, bc, p, f.values()))
}

pub(crate) fn energy_raw(g: &Graph, bc: &Boundary, p: Exponent, x: &[f64]) -> f64 {
    let pv = p.value();
    let mut acc = 0.0;
    match bc {
        Boundary::Neumann => {
            for e in g.edges() {
                acc += e.mu * abs_pow(pv, x[e.head.0] - x[e.tail.0]);
            }
        }
        Boundary::Dirichlet(tr) => {
            for e in g.edges() {
                if tr.inside[e.tail.0] && tr.inside[e.head.0] {
                    acc += e.mu * abs_pow(pv, x[e.head.0] - x[e.tail.0]);
                }
            }
            for &v in &tr.members {
                let a = tr.absorption[v.0];
                if a != 0.0 {
                    acc += a * abs_pow(pv, x[v.0]);
                }
            }
        }
    }
    acc / pv
}

/// Largest deviation between the ν-scaled central-difference gradient of the
/// energy and the operator, relative to `max(‖L f‖_∞, 1e-300)` (or absolute
/// when the operator vanishes).
///
/// For `p < 2` nodes adjacent to a difference (or, under absorption, a value)
/// smaller than `10·step` are skipped: the energy is not twice differentiable
/// there. Under a Dirichlet truncation only member nodes are compared.
pub fn gradient_check(
    g: &Graph,
    bc: &Boundary,
    p: Exponent,
    f: &NodeFunction,
    step: f64,
) -> Result<f64, OperatorError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(OperatorError::InvalidStep(step));
    }
    let lf = apply(g, bc, p, f)?;
    let scale = lf.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut x = f.values().to_vec();
    let mut worst = 0.0f64;
    for v in g.nodes() {
        if let Some(tr) = bc.dirichlet() {
            if !tr.contains(v) {
                continue;
            }
        }
        if p.value() < 2.0 && near_kink(g, bc, &x, v, 10.0 * step) {
            continue;
        }
        let x0 = x[v.0];
        x[v.0] = x0 + step;
        let up = energy_raw(g, bc, p, &x);
        x[v.0] = x0 - step;
        let down = energy_raw(g, bc, p, &x);
        x[v.0] = x0;
        let fd = (up - down) / (2.0 * step) / g.nu(v);
        worst = worst.max((fd - lf[v]).abs() / scale);
    }
    Ok(worst)
}

fn near_kink(g: &Graph, bc: &Boundary, x: &[f64], v: NodeId, radius: f64) -> bool {
    let inside = |w: NodeId| bc.dirichlet().is_none_or(|tr| tr.contains(w));
    let edge_kink = g
        .neighbors(v)
        .any(|(_, w, _)| inside(w) && (x[v.0] - x[w.0]).abs() < radius);
    let absorb_kink = bc
        .dirichlet()
        .is_some_and(|tr| tr.absorption(v) > 0.0 && x[v.0].abs() < radius);
    edge_kink || absorb_kink
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{lattice_box, path, two_node, GraphBuilder, LatticeSpec};

    fn exp(p: f64) -> Exponent {
        Exponent::new(p).unwrap()
    }

    #[test]
    fn exponent_validation() {
        assert!(Exponent::new(1.0).is_err());
        assert!(Exponent::new(f64::NAN).is_err());
        assert!(Exponent::new(f64::INFINITY).is_err());
        assert_eq!(exp(3.0).conjugate(), 1.5);
    }

    #[test]
    fn g_p_examples() {
        assert_eq!(g_p(exp(3.0), -2.0), -4.0);
        assert_eq!(g_p(exp(1.5), 0.0), 0.0);
        for x in [-3.5, -1e-9, 0.0, 0.25, 7.0] {
            assert_eq!(g_p(exp(2.0), x), x);
        }
        assert_eq!(g_p(exp(4.0), -2.0), -8.0);
        assert!((g_p(exp(2.5), 4.0) - 8.0).abs() < 1e-15);
    }

    #[test]
    fn constant_is_in_the_kernel() {
        let g = lattice_box(&LatticeSpec::new(2, 3, true)).unwrap();
        let f = NodeFunction::constant(&g, 1.7);
        let l = p_laplacian(&g, exp(3.0), &f).unwrap();
        assert!(l.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn path_with_cubic_exponent() {
        let g = path(3).unwrap();
        let f = NodeFunction::new(&g, vec![0.0, 1.0, 3.0]).unwrap();
        let l = p_laplacian(&g, exp(3.0), &f).unwrap();
        assert_eq!(l.values(), &[-1.0, -3.0, 4.0]);
    }

    #[test]
    fn linear_two_node() {
        let g = two_node();
        let f = NodeFunction::new(&g, vec![0.0, 1.0]).unwrap();
        assert_eq!(
            p_laplacian(&g, exp(2.0), &f).unwrap().values(),
            &[-1.0, 1.0]
        );
    }

    #[test]
    fn truncation_examples() {
        let g = path(3).unwrap();
        let f = NodeFunction::new(&g, vec![0.0, 1.0, 3.0]).unwrap();
        let whole = DirichletTruncation::whole(&g);
        assert_eq!(
            truncated_p_laplacian(&g, &whole, exp(3.0), &f).unwrap(),
            p_laplacian(&g, exp(3.0), &f).unwrap()
        );

        let tr = DirichletTruncation::new(&g, &[NodeId(1)]).unwrap();
        let h = NodeFunction::delta(&g, NodeId(1)).unwrap();
        let l = truncated_p_laplacian(&g, &tr, exp(2.0), &h).unwrap();
        assert_eq!(l.values(), &[0.0, 2.0, 0.0]);

        let mut b = GraphBuilder::new();
        let v = b.add_node("v", 1.0).unwrap();
        b.add_halo(v, 2.0).unwrap();
        let single = b.build().unwrap();
        let tr = DirichletTruncation::whole(&single);
        let h = NodeFunction::new(&single, vec![4.0]).unwrap();
        let l = truncated_p_laplacian(&single, &tr, exp(1.5), &h).unwrap();
        assert!((l.values()[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn outside_branch_formula() {
        let g = path(3).unwrap();
        let tr = DirichletTruncation::new(&g, &[NodeId(1)]).unwrap();
        let h = NodeFunction::new(&g, vec![2.0, 0.0, 0.0]).unwrap();
        // node 0 is outside with one unit edge into V_n: −g_3(2)·1
        let l = truncated_p_laplacian(&g, &tr, exp(3.0), &h).unwrap();
        assert_eq!(l.values(), &[-4.0, 0.0, 0.0]);
    }

    #[test]
    fn energy_examples() {
        let g = two_node();
        let f = NodeFunction::new(&g, vec![0.0, 1.0]).unwrap();
        assert_eq!(energy(&g, &Boundary::Neumann, exp(2.0), &f).unwrap(), 0.5);
        let c = NodeFunction::constant(&g, 3.0);
        assert_eq!(energy(&g, &Boundary::Neumann, exp(2.5), &c).unwrap(), 0.0);

        let g = path(3).unwrap();
        let f = NodeFunction::new(&g, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(energy(&g, &Boundary::Neumann, exp(3.0), &f).unwrap(), 3.0);

        let z = lattice_box(&LatticeSpec::new(1, 2, true)).unwrap();
        let bc = Boundary::Dirichlet(DirichletTruncation::whole(&z));
        let f = NodeFunction::constant(&z, 1.0);
        // each end has one halo edge: (1/2)(1 + 1)
        assert_eq!(energy(&z, &bc, exp(2.0), &f).unwrap(), 1.0);
    }

    #[test]
    fn gradient_check_examples() {
        let g = lattice_box(&LatticeSpec::new(2, 3, true)).unwrap();
        let f = NodeFunction::from_fn(&g, |v| (v.0 as f64 * 0.37).sin());
        let e2 = gradient_check(&g, &Boundary::Neumann, exp(2.0), &f, 1e-5).unwrap();
        assert!(e2 <= 1e-7, "{e2}");
        let e4 = gradient_check(&g, &Boundary::Neumann, exp(4.0), &f, 1e-4).unwrap();
        assert!(e4 <= 1e-5, "{e4}");
        let bc = Boundary::Dirichlet(DirichletTruncation::whole(&g));
        let e3 = gradient_check(&g, &bc, exp(3.0), &f, 1e-5).unwrap();
        assert!(e3 <= 1e-7, "{e3}");
        let c = NodeFunction::constant(&g, 2.0);
        assert_eq!(
            gradient_check(&g, &Boundary::Neumann, exp(1.5), &c, 1e-5).unwrap(),
            0.0
        );
        assert!(gradient_check(&g, &Boundary::Neumann, exp(2.0), &c, 0.0).is_err());
    }

    #[test]
    fn domain_errors() {
        let g = path(3).unwrap();
        let f = NodeFunction::from_vec_unchecked(vec![1.0]);
        assert!(p_laplacian(&g, exp(2.0), &f).is_err());
        let other = path(4).unwrap();
        let tr = DirichletTruncation::whole(&other);
        let f = NodeFunction::zeros(&g);
        assert!(truncated_p_laplacian(&g, &tr, exp(2.0), &f).is_err());
    }
}
