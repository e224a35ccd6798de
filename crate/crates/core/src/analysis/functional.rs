//! Sobolev and Poincaré inequalities on finite graphs.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{is_connected, ulf_constant, Graph, NodeFunction, NodeId};
use crate::operator::Boundary;
use crate::solver::{LinearReference, DENSE_NODE_CAP};

use super::{range, sobolev_exponent, weighted_lq, AnalysisError};

/// `‖Iᵀf‖_{ℓ^p_μ}` where every halo unit contributes `|f(v)|` at its node,
/// i.e. `f` is extended by zero to the absorbing layer.
fn gradient_norm(g: &Graph, p: f64, x: &[f64]) -> f64 {
    let mut diffs = Vec::with_capacity(g.edge_count() + g.node_count());
    let mut weights = Vec::with_capacity(diffs.capacity());
    for e in g.edges() {
        diffs.push(x[e.head.0] - x[e.tail.0]);
        weights.push(e.mu);
    }
    for v in 0..g.node_count() {
        let h = g.halo_slice()[v];
        if h > 0.0 {
            diffs.push(x[v]);
            weights.push(h);
        }
    }
    weighted_lq(&diffs, &weights, p)
}

/// `‖f‖_{ℓ^{p*}_ν} / ‖Iᵀf‖_{ℓ^p_μ}` with halo edges included; `None` when
/// the gradient vanishes.
pub fn sobolev_ratio(
    g: &Graph,
    d: f64,
    p: f64,
    f: &NodeFunction,
) -> Result<Option<f64>, AnalysisError> {
    f.check_domain(g)?;
    let p_star = sobolev_exponent(d, p)?;
    let den = gradient_norm(g, p, f.values());
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(weighted_lq(f.values(), g.nu_slice(), p_star) / den))
}

/// Constants assembled from the chain `isoperimetry ⇒ ℓ¹ Sobolev ⇒ ℓ^p
/// Sobolev` applied to `|f|^α`, `α = p(d−1)/(d−p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevReference {
    pub c_d: f64,
    /// ULF constant of the graph.
    pub c1: f64,
    pub alpha: f64,
    /// `max(1, C₁^{−(d−1)/d})`
    pub c_prime: f64,
    /// `C_d·α·C′`: bound for `‖f‖_{p*}/‖Iᵀf‖_p` at this `p`.
    pub comparison_bound: f64,
    /// `C_d·(d−1)·C′`: `p`-independent constant of the final inequality
    /// `‖f‖_{p*} ≤ S·p/(d−p)·‖Iᵀf‖_p`.
    pub theorem_constant: f64,
}

impl SobolevReference {
    /// The constant entering `C̄ = C^p m(m−1)(d−p)^p/(m+p−2)^p`. Applying the
    /// Sobolev inequality `‖f‖_{p*} ≤ S·p/(d−p)·‖Iᵀf‖_p` to `g^s` produces
    /// `S^{−p}` there, so `C = 1/S`.
    pub fn extinction_constant(&self) -> f64 {
        1.0 / self.theorem_constant
    }
}

/// Heuristic reference constants from an isoperimetric constant `c_d`.
pub fn sobolev_reference(
    g: &Graph,
    d: f64,
    p: f64,
    c_d: f64,
) -> Result<SobolevReference, AnalysisError> {
    sobolev_exponent(d, p)?;
    if !(c_d > 0.0 && c_d.is_finite()) {
        return Err(range(
            "C_d",
            format!("isoperimetric constant must be positive, got {c_d}"),
        ));
    }
    let c1 = ulf_constant(g);
    if !(c1 > 0.0) {
        return Err(range(
            "C1",
            format!("ULF constant must be positive, got {c1}"),
        ));
    }
    let alpha = p * (d - 1.0) / (d - p);
    let c_prime = c1.powf(-(d - 1.0) / d).max(1.0);
    Ok(SobolevReference {
        c_d,
        c1,
        alpha,
        c_prime,
        comparison_bound: c_d * alpha * c_prime,
        theorem_constant: c_d * (d - 1.0) * c_prime,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SobolevFamily {
    Delta,
    Block,
    Pyramid,
    RandomNonnegative,
    RandomSigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevSample {
    pub family: SobolevFamily,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevReport {
    pub worst_ratio: f64,
    pub worst_family: SobolevFamily,
    /// Worst ratio per family, in family order.
    pub per_family: Vec<SobolevSample>,
    pub samples: usize,
    pub reference: SobolevReference,
    pub within_bound: bool,
}

/// Worst Sobolev ratio over deltas at every node, blocks, pyramids and
/// `random` random finitely supported functions (nonnegative and signed).
///
/// On lattice boxes blocks are centered cubes and pyramids are
/// `(R − |x − c|₁)₊`; on other graphs both use graph-distance balls.
pub fn sobolev_check(
    g: &Graph,
    d: f64,
    p: f64,
    c_d: f64,
    random: usize,
    seed: u64,
) -> Result<SobolevReport, AnalysisError> {
    let reference = sobolev_reference(g, d, p, c_d)?;
    let n = g.node_count();
    let mut worst: Vec<(SobolevFamily, f64)> = Vec::new();
    let mut count = 0usize;
    let mut record = |family: SobolevFamily, x: Vec<f64>| -> Result<(), AnalysisError> {
        let f = NodeFunction::from_vec_unchecked(x);
        if let Some(r) = sobolev_ratio(g, d, p, &f)? {
            count += 1;
            match worst.iter_mut().find(|(fam, _)| *fam == family) {
                Some(entry) => entry.1 = entry.1.max(r),
                None => worst.push((family, r)),
            }
        }
        Ok(())
    };
    for v in 0..n {
        let mut x = vec![0.0; n];
        x[v] = 1.0;
        record(SobolevFamily::Delta, x)?;
    }
    let lattice = coords(g);
    let center = crate::graph::center_node(g);
    let dist = distances(g, center, &lattice);
    let max_dist = dist
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max);
    if let Some(c) = &lattice {
        let side = c.iter().flat_map(|x| x.iter()).copied().max().unwrap_or(0) + 1;
        let mid = &c[center.0];
        for k in 1..=side {
            let lo: Vec<i64> = mid.iter().map(|&m| m - (k - 1) / 2).collect();
            let x = c
                .iter()
                .map(|x| {
                    let inside = x.iter().zip(&lo).all(|(&a, &l)| a >= l && a < l + k);
                    f64::from(u8::from(inside))
                })
                .collect();
            record(SobolevFamily::Block, x)?;
        }
    } else {
        for r in 0..=(max_dist as usize) {
            let x = dist
                .iter()
                .map(|&dv| f64::from(u8::from(dv <= r as f64)))
                .collect();
            record(SobolevFamily::Block, x)?;
        }
    }
    for r in 1..=(max_dist as usize + 1) {
        let x = dist.iter().map(|&dv| (r as f64 - dv).max(0.0)).collect();
        record(SobolevFamily::Pyramid, x)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..random {
        let signed = i % 2 == 1;
        let size = rng.random_range(1..=n);
        let support = random_cluster(g, size, &mut rng);
        let mut x = vec![0.0; n];
        for v in support {
            x[v.0] = if signed {
                rng.random_range(-1.0..1.0)
            } else {
                rng.random_range(0.0..1.0)
            };
        }
        let family = if signed {
            SobolevFamily::RandomSigned
        } else {
            SobolevFamily::RandomNonnegative
        };
        record(family, x)?;
    }
    worst.sort_by_key(|(f, _)| *f);
    let (worst_family, worst_ratio) = worst
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(AnalysisError::ZeroSignal)?;
    Ok(SobolevReport {
        worst_ratio,
        worst_family,
        per_family: worst
            .into_iter()
            .map(|(family, ratio)| SobolevSample { family, ratio })
            .collect(),
        samples: count,
        within_bound: worst_ratio <= reference.comparison_bound,
        reference,
    })
}

fn coords(g: &Graph) -> Option<Vec<Vec<i64>>> {
    g.nodes().map(|v| g.coordinates(v)).collect()
}

/// ℓ¹ lattice distance when coordinates exist, graph distance otherwise.
fn distances(g: &Graph, from: NodeId, coords: &Option<Vec<Vec<i64>>>) -> Vec<f64> {
    if let Some(c) = coords {
        let o = &c[from.0];
        return c
            .iter()
            .map(|x| x.iter().zip(o).map(|(a, b)| (a - b).abs()).sum::<i64>() as f64)
            .collect();
    }
    let mut dist = vec![f64::INFINITY; g.node_count()];
    dist[from.0] = 0.0;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for (_, w, _) in g.neighbors(v) {
            if dist[w.0].is_infinite() {
                dist[w.0] = dist[v.0] + 1.0;
                queue.push_back(w);
            }
        }
    }
    dist
}

fn random_cluster(g: &Graph, size: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let n = g.node_count();
    let start = NodeId(rng.random_range(0..n));
    let mut member = vec![false; n];
    member[start.0] = true;
    let mut set = vec![start];
    let mut frontier: Vec<NodeId> = g.neighbors(start).map(|(_, w, _)| w).collect();
    while set.len() < size {
        frontier.retain(|w| !member[w.0]);
        if frontier.is_empty() {
            break;
        }
        let w = frontier[rng.random_range(0..frontier.len())];
        member[w.0] = true;
        set.push(w);
        frontier.extend(g.neighbors(w).map(|(_, x, _)| x).filter(|x| !member[x.0]));
    }
    set
}

/// `1/√λ₁` for the smallest nonzero eigenvalue `λ₁` of the ν-weighted linear
/// Laplacian. Dense eigensolve up to the dense cap, deflated inverse
/// iteration above it.
pub fn poincare_constant(g: &Graph) -> Result<f64, AnalysisError> {
    if g.node_count() < 2 || !is_connected(g) {
        return Err(range(
            "graph",
            "Poincaré constant needs a connected graph with at least two nodes",
        ));
    }
    let lambda = if g.node_count() <= DENSE_NODE_CAP {
        LinearReference::new(g, &Boundary::Neumann)
            .map_err(|e| range("graph", e.to_string()))?
            .spectrum()[1]
    } else {
        smallest_nonzero_eigenvalue(g)
    };
    Ok(1.0 / lambda.sqrt())
}

/// Symmetrized operator `S = N^{-1/2} K N^{-1/2}` applied to `x`.
fn apply_sym(g: &Graph, sqrt_nu: &[f64], x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for e in g.edges() {
        let (a, b) = (e.tail.0, e.head.0);
        let d = e.mu * (x[b] / sqrt_nu[b] - x[a] / sqrt_nu[a]);
        out[b] += d / sqrt_nu[b];
        out[a] -= d / sqrt_nu[a];
    }
}

fn smallest_nonzero_eigenvalue(g: &Graph) -> f64 {
    let n = g.node_count();
    let sqrt_nu: Vec<f64> = g.nu_slice().iter().map(|v| v.sqrt()).collect();
    let total: f64 = g.total_nu();
    let null: Vec<f64> = sqrt_nu.iter().map(|s| s / total.sqrt()).collect();
    let deflate = |x: &mut [f64]| {
        let c: f64 = x.iter().zip(&null).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(&null).for_each(|(a, b)| *a -= c * b);
    };
    let normalize = |x: &mut [f64]| {
        let s = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        x.iter_mut().for_each(|a| *a /= s);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    deflate(&mut x);
    normalize(&mut x);
    let mut sx = vec![0.0; n];
    let mut lambda = f64::INFINITY;
    for _ in 0..500 {
        // inverse iteration: solve S y = x on the complement of the kernel by CG
        let y = cg_solve(g, &sqrt_nu, &x, &deflate);
        x = y;
        deflate(&mut x);
        normalize(&mut x);
        apply_sym(g, &sqrt_nu, &x, &mut sx);
        let rq: f64 = x.iter().zip(&sx).map(|(a, b)| a * b).sum();
        if (rq - lambda).abs() <= 1e-14 * rq {
            return rq;
        }
        lambda = rq;
    }
    lambda
}

fn cg_solve(g: &Graph, sqrt_nu: &[f64], b: &[f64], deflate: &dyn Fn(&mut [f64])) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    deflate(&mut r);
    let mut q = r.clone();
    let mut sq = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|a| a * a).sum();
    let tol = 1e-26 * rr;
    for _ in 0..(10 * n) {
        apply_sym(g, sqrt_nu, &q, &mut sq);
        let qsq: f64 = q.iter().zip(&sq).map(|(a, b)| a * b).sum();
        if !(qsq > 0.0) {
            break;
        }
        let a = rr / qsq;
        for i in 0..n {
            x[i] += a * q[i];
            r[i] -= a * sq[i];
        }
        deflate(&mut r);
        let rr_new: f64 = r.iter().map(|a| a * a).sum();
        if rr_new <= tol {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            q[i] = r[i] + beta * q[i];
        }
    }
    x
}

/// Largest `‖f − f̄‖_{ℓ²_ν} / (C‖Iᵀf‖_{ℓ²_μ})` over `samples` random
/// functions; at most 1 when `c` is a valid Poincaré constant. Halo is not
/// counted since the inequality concerns the Neumann graph.
pub fn poincare_check(g: &Graph, c: f64, samples: usize, seed: u64) -> Result<f64, AnalysisError> {
    let n = g.node_count();
    let total = g.total_nu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = x.iter().zip(g.nu_slice()).map(|(a, w)| a * w).sum::<f64>() / total;
        let lhs = x
            .iter()
            .zip(g.nu_slice())
            .map(|(a, w)| w * (a - mean) * (a - mean))
            .sum::<f64>()
            .sqrt();
        let rhs = g
            .edges()
            .iter()
            .map(|e| e.mu * (x[e.head.0] - x[e.tail.0]).powi(2))
            .sum::<f64>()
            .sqrt();
        if rhs > 0.0 {
            worst = worst.max(lhs / (c * rhs));
        }
    }
    Ok(worst)
}
