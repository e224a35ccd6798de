//! Exact solution of the linear (p = 2) heat flow by dense eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::graph::{Graph, NodeFunction};
use crate::operator::Boundary;

use super::SolverError;

/// Largest graph handled by dense eigendecomposition.
pub const DENSE_NODE_CAP: usize = 512;

/// Spectral factorization of the ν-symmetrized linear Laplacian
/// `N^{-1/2} K N^{-1/2} = Q Λ Qᵀ`, restricted to the Dirichlet members when a
/// truncation is given.
#[derive(Debug, Clone)]
pub struct LinearReference {
    nodes: Vec<usize>,
    n_total: usize,
    sqrt_nu: Vec<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl LinearReference {
    pub fn new(g: &Graph, bc: &Boundary) -> Result<Self, SolverError> {
        let nodes: Vec<usize> = match bc {
            Boundary::Neumann => (0..g.node_count()).collect(),
            Boundary::Dirichlet(tr) => {
                tr.check_domain(g)?;
                tr.members().iter().map(|v| v.0).collect()
            }
        };
        let n = nodes.len();
        if n > DENSE_NODE_CAP {
            return Err(SolverError::TooLarge {
                nodes: n,
                cap: DENSE_NODE_CAP,
            });
        }
        let mut local = vec![usize::MAX; g.node_count()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let mut k = DMatrix::<f64>::zeros(n, n);
        for e in g.edges() {
            let (a, b) = (local[e.tail.0], local[e.head.0]);
            if a != usize::MAX && b != usize::MAX {
                k[(a, a)] += e.mu;
                k[(b, b)] += e.mu;
                k[(a, b)] -= e.mu;
                k[(b, a)] -= e.mu;
            }
        }
        if let Boundary::Dirichlet(tr) = bc {
            for (i, &v) in nodes.iter().enumerate() {
                k[(i, i)] += tr.absorption_slice()[v];
            }
        }
        let sqrt_nu: Vec<f64> = nodes.iter().map(|&v| g.nu_slice()[v].sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] /= sqrt_nu[i] * sqrt_nu[j];
            }
        }
        let eig = SymmetricEigen::new(k);
        Ok(Self {
            nodes,
            n_total: g.node_count(),
            sqrt_nu,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    /// Eigenvalues of the ν-weighted Laplacian in ascending order.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `e^{−tL} f0`; Dirichlet outsiders are returned as zero.
    pub fn at(&self, f0: &NodeFunction, t: f64) -> Result<NodeFunction, SolverError> {
        if f0.len() != self.n_total {
            return Err(SolverError::Graph(
                crate::graph::GraphError::DomainMismatch {
                    expected: self.n_total,
                    found: f0.len(),
                },
            ));
        }
        if !(t >= 0.0) {
            return Err(SolverError::InvalidInput(format!(
                "time must be nonnegative, got {t}"
            )));
        }
        if t == 0.0 {
            let mut out = vec![0.0; self.n_total];
            for &v in &self.nodes {
                out[v] = f0.values()[v];
            }
            return Ok(NodeFunction::from_vec_unchecked(out));
        }
        let x = DVector::from_iterator(
            self.nodes.len(),
            self.nodes
                .iter()
                .zip(&self.sqrt_nu)
                .map(|(&v, s)| f0.values()[v] * s),
        );
        let mut coeff = self.eigenvectors.tr_mul(&x);
        for (c, lam) in coeff.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= (-lam.max(0.0) * t).exp();
        }
        let y = &self.eigenvectors * coeff;
        let mut out = vec![0.0; self.n_total];
        for (i, &v) in self.nodes.iter().enumerate() {
            out[v] = y[i] / self.sqrt_nu[i];
        }
        Ok(NodeFunction::from_vec_unchecked(out))
    }
}

/// `e^{−tL} f0` for the linear Laplacian.
pub fn linear_reference(
    g: &Graph,
    bc: &Boundary,
    f0: &NodeFunction,
    t: f64,
) -> Result<NodeFunction, SolverError> {
    LinearReference::new(g, bc)?.at(f0, t)
}
