use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphBuilder, GraphError, NodeId};

/// Largest lattice box [`lattice_box`] will build.
pub const LATTICE_NODE_CAP: usize = 1 << 22;

/// Box `{0..n-1}^d` of the integer lattice with nearest-neighbour edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub d: usize,
    pub n: usize,
    /// Record the missing lattice neighbours of boundary nodes as halo mass.
    pub halo: bool,
    pub nu: f64,
    pub mu: f64,
}

impl LatticeSpec {
    pub fn new(d: usize, n: usize, halo: bool) -> Self {
        Self {
            d,
            n,
            halo,
            nu: 1.0,
            mu: 1.0,
        }
    }
}

/// Builds a lattice box. Node ids are the comma-joined coordinates, nodes are
/// stored in lexicographic order and every edge points from the smaller to
/// the larger coordinate.
pub fn lattice_box(spec: &LatticeSpec) -> Result<Graph, GraphError> {
    let LatticeSpec { d, n, halo, nu, mu } = *spec;
    if d == 0 || n == 0 {
        return Err(GraphError::InvalidParameter(format!(
            "lattice box needs d >= 1 and n >= 1, got d={d}, n={n}"
        )));
    }
    let count = u32::try_from(d)
        .ok()
        .and_then(|d| n.checked_pow(d))
        .filter(|&c| c <= LATTICE_NODE_CAP)
        .ok_or(GraphError::TooLarge {
            requested: n.saturating_pow(d.min(64) as u32),
            cap: LATTICE_NODE_CAP,
        })?;

    let mut b = GraphBuilder::with_capacity(count, d * count);
    let mut coord = vec![0usize; d];
    for idx in 0..count {
        decode(idx, n, &mut coord);
        let id = coord
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let v = b.add_node(id, nu)?;
        if halo {
            let missing: usize = coord
                .iter()
                .map(|&c| usize::from(c == 0) + usize::from(c + 1 == n))
                .sum();
            b.add_halo(v, missing as f64 * mu)?;
        }
    }
    // stride of axis k in the lexicographic (last axis fastest) order
    let strides: Vec<usize> = (0..d).map(|k| n.pow((d - 1 - k) as u32)).collect();
    for idx in 0..count {
        decode(idx, n, &mut coord);
        for k in 0..d {
            if coord[k] + 1 < n {
                b.add_edge(NodeId(idx), NodeId(idx + strides[k]), mu)?;
            }
        }
    }
    b.build()
}

fn decode(mut idx: usize, n: usize, coord: &mut [usize]) {
    for c in coord.iter_mut().rev() {
        *c = idx % n;
        idx /= n;
    }
}

/// Path `0 - 1 - ... - (n-1)` with unit weights.
pub fn path(n: usize) -> Result<Graph, GraphError> {
    lattice_box(&LatticeSpec::new(1, n, false))
}

/// Cycle on `n >= 3` nodes with unit weights, edges `i -> i+1 (mod n)`.
pub fn cycle(n: usize) -> Result<Graph, GraphError> {
    if n < 3 {
        return Err(GraphError::InvalidParameter(format!(
            "a simple cycle needs at least 3 nodes, got {n}"
        )));
    }
    let mut b = GraphBuilder::with_capacity(n, n);
    for i in 0..n {
        b.add_node(i.to_string(), 1.0)?;
    }
    for i in 0..n {
        b.add_edge(NodeId(i), NodeId((i + 1) % n), 1.0)?;
    }
    b.build()
}

/// Unit-weight star with center `c` and leaves `l0..`.
pub fn star(leaves: usize) -> Result<Graph, GraphError> {
    let mut b = GraphBuilder::with_capacity(leaves + 1, leaves);
    let c = b.add_node("c", 1.0)?;
    for i in 0..leaves {
        let l = b.add_node(format!("l{i}"), 1.0)?;
        b.add_edge(c, l, 1.0)?;
    }
    b.build()
}

/// Two unit nodes `0 -> 1` joined by a unit edge.
pub fn two_node() -> Graph {
    path(2).expect("two-node path is valid")
}

/// Random connected graph: a random recursive tree plus `extra` additional
/// edges, with ν and μ drawn uniformly from [0.5, 2].
pub fn random_connected(n: usize, extra: usize, seed: u64) -> Result<Graph, GraphError> {
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let max_edges = n * (n - 1) / 2;
    if n - 1 + extra > max_edges {
        return Err(GraphError::InvalidParameter(format!(
            "{n} nodes admit at most {max_edges} simple edges"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::with_capacity(n, n - 1 + extra);
    for i in 0..n {
        b.add_node(i.to_string(), rng.random_range(0.5..2.0))?;
    }
    let mut pairs = HashSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        pairs.insert((j, i));
        b.add_edge(NodeId(j), NodeId(i), rng.random_range(0.5..2.0))?;
    }
    let mut added = 0;
    while added < extra {
        let a = rng.random_range(0..n);
        let c = rng.random_range(0..n);
        let key = (a.min(c), a.max(c));
        if a == c || !pairs.insert(key) {
            continue;
        }
        b.add_edge(NodeId(key.0), NodeId(key.1), rng.random_range(0.5..2.0))?;
        added += 1;
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::is_connected;

    #[test]
    fn one_dimensional_box_is_a_path() {
        let g = lattice_box(&LatticeSpec::new(1, 3, false)).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 2));
        assert!(!g.has_halo());
    }

    #[test]
    fn small_square_with_halo() {
        let g = lattice_box(&LatticeSpec::new(2, 2, true)).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (4, 4));
        assert!(g.nodes().all(|v| g.halo(v) == 2.0));
    }

    #[test]
    fn single_site_with_halo() {
        let g = lattice_box(&LatticeSpec::new(1, 1, true)).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));
        assert_eq!(g.halo(NodeId(0)), 2.0);
    }

    #[test]
    fn halo_completes_every_degree() {
        let g = lattice_box(&LatticeSpec::new(3, 4, true)).unwrap();
        assert_eq!(g.node_count(), 64);
        assert_eq!(g.edge_count(), 3 * 3 * 16);
        assert!(g.nodes().all(|v| g.node_mu(v) == 6.0));
    }

    #[test]
    fn edges_point_up_the_lattice() {
        let g = lattice_box(&LatticeSpec::new(2, 3, false)).unwrap();
        for e in g.edges() {
            let t = g.coordinates(e.tail).unwrap();
            let h = g.coordinates(e.head).unwrap();
            let diff: Vec<i64> = h.iter().zip(&t).map(|(a, b)| a - b).collect();
            assert_eq!(diff.iter().sum::<i64>(), 1);
            assert!(diff.iter().all(|&x| x == 0 || x == 1));
        }
    }

    #[test]
    fn rejects_degenerate_and_huge_boxes() {
        assert!(lattice_box(&LatticeSpec::new(0, 3, false)).is_err());
        assert!(lattice_box(&LatticeSpec::new(2, 0, false)).is_err());
        assert!(matches!(
            lattice_box(&LatticeSpec::new(4, 100, false)),
            Err(GraphError::TooLarge { .. })
        ));
    }

    #[test]
    fn random_graphs_are_connected_and_reproducible() {
        let a = random_connected(30, 20, 7).unwrap();
        let b = random_connected(30, 20, 7).unwrap();
        assert_eq!(a, b);
        assert!(is_connected(&a));
        assert_eq!(a.edge_count(), 49);
        assert!(random_connected(3, 5, 0).is_err());
    }

    #[test]
    fn cycle_and_star_shapes() {
        let c = cycle(6).unwrap();
        assert!(c.nodes().all(|v| c.node_mu(v) == 2.0));
        assert!(cycle(2).is_err());
        assert_eq!(star(4).unwrap().edge_count(), 4);
    }
}
