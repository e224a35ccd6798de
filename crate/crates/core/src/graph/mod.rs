//! Weighted, simple, oriented graphs and the incidence calculus on them.
//!
//! A [`Graph`] carries a node measure `nu` and an edge measure `mu`. Every
//! edge has a stored orientation `tail -> head`; the orientation only
//! parametrizes the signed incidence matrix and never changes any of the
//! operators built on top of it.
//!
//! Graphs can carry *halo* metadata: an extra μ-degree per node standing for
//! edges toward an implicit absorbing layer outside the graph (the rest of an
//! ambient infinite lattice, or the complement of an induced subgraph). Halo
//! mass is ignored by the Neumann operator and used by Dirichlet truncations
//! and by boundary counting.

mod exhaustion;
mod generators;
mod iso;

pub use exhaustion::ExhaustionFamily;
pub use generators::{
    cycle, lattice_box, path, random_connected, star, two_node, LatticeSpec, LATTICE_NODE_CAP,
};
pub use iso::{
    boundary_edges, isoperimetric_constant, BoundarySet, IsoEstimate, IsoOptions, Sampling,
    EXHAUSTIVE_NODE_CAP,
};

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::ops::Index;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("weight of {what} must be positive and finite, got {value}")]
    NonPositiveWeight { what: String, value: f64 },
    #[error("self-loop at node `{0}`")]
    SelfLoop(String),
    #[error("more than one edge between `{0}` and `{1}`")]
    DuplicateEdge(String, String),
    #[error("function has {found} entries but the graph has {expected}")]
    DomainMismatch { expected: usize, found: usize },
    #[error("graph would have {requested} nodes, above the cap of {cap}")]
    TooLarge { requested: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Dense index of a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Dense index of an edge inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl EdgeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: NodeId,
    pub head: NodeId,
    pub mu: f64,
}

impl Edge {
    /// Endpoint opposite to `v`; `v` must be an endpoint.
    pub fn other(&self, v: NodeId) -> NodeId {
        if self.tail == v {
            self.head
        } else {
            self.tail
        }
    }

    /// Incidence sign ι_ve: −1 at the tail, +1 at the head.
    pub fn sign_at(&self, v: NodeId) -> f64 {
        if self.head == v {
            1.0
        } else if self.tail == v {
            -1.0
        } else {
            0.0
        }
    }
}

/// Immutable weighted graph `(V, E, nu, mu)` plus halo metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
    nu: Vec<f64>,
    halo: Vec<f64>,
    edges: Vec<Edge>,
    incident: Vec<Vec<EdgeId>>,
}

/// Incremental construction of a [`Graph`]; all invariants are checked in
/// [`GraphBuilder::build`] or as items are added.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
    nu: Vec<f64>,
    halo: Vec<f64>,
    edges: Vec<Edge>,
    pairs: HashSet<(usize, usize)>,
}

fn check_weight(what: impl FnOnce() -> String, value: f64) -> Result<(), GraphError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(GraphError::NonPositiveWeight {
            what: what(),
            value,
        })
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self {
            ids: Vec::with_capacity(nodes),
            lookup: HashMap::with_capacity(nodes),
            nu: Vec::with_capacity(nodes),
            halo: Vec::with_capacity(nodes),
            edges: Vec::with_capacity(edges),
            pairs: HashSet::with_capacity(edges),
        }
    }

    pub fn add_node(&mut self, id: impl Into<String>, nu: f64) -> Result<NodeId, GraphError> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(GraphError::InvalidParameter(format!(
                "node id `{id}` must be non-empty and free of whitespace"
            )));
        }
        check_weight(|| format!("node `{id}`"), nu)?;
        if self.lookup.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        let idx = self.ids.len();
        self.lookup.insert(id.clone(), idx);
        self.ids.push(id);
        self.nu.push(nu);
        self.halo.push(0.0);
        Ok(NodeId(idx))
    }

    pub fn node(&self, id: &str) -> Result<NodeId, GraphError> {
        self.lookup
            .get(id)
            .map(|&i| NodeId(i))
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn add_edge(&mut self, tail: NodeId, head: NodeId, mu: f64) -> Result<EdgeId, GraphError> {
        let n = self.ids.len();
        for v in [tail, head] {
            if v.0 >= n {
                return Err(GraphError::UnknownNode(format!("#{}", v.0)));
            }
        }
        if tail == head {
            return Err(GraphError::SelfLoop(self.ids[tail.0].clone()));
        }
        check_weight(
            || format!("edge `{}`-`{}`", self.ids[tail.0], self.ids[head.0]),
            mu,
        )?;
        let key = (tail.0.min(head.0), tail.0.max(head.0));
        if !self.pairs.insert(key) {
            return Err(GraphError::DuplicateEdge(
                self.ids[tail.0].clone(),
                self.ids[head.0].clone(),
            ));
        }
        self.edges.push(Edge { tail, head, mu });
        Ok(EdgeId(self.edges.len() - 1))
    }

    pub fn add_edge_by_id(
        &mut self,
        tail: &str,
        head: &str,
        mu: f64,
    ) -> Result<EdgeId, GraphError> {
        let t = self.node(tail)?;
        let h = self.node(head)?;
        self.add_edge(t, h, mu)
    }

    /// Adds `extra` to the halo μ-degree of `v`.
    pub fn add_halo(&mut self, v: NodeId, extra: f64) -> Result<(), GraphError> {
        if v.0 >= self.ids.len() {
            return Err(GraphError::UnknownNode(format!("#{}", v.0)));
        }
        if !(extra.is_finite() && extra >= 0.0) {
            return Err(GraphError::NonPositiveWeight {
                what: format!("halo of `{}`", self.ids[v.0]),
                value: extra,
            });
        }
        self.halo[v.0] += extra;
        Ok(())
    }

    pub fn build(self) -> Result<Graph, GraphError> {
        if self.ids.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut incident = vec![Vec::new(); self.ids.len()];
        for (k, e) in self.edges.iter().enumerate() {
            incident[e.tail.0].push(EdgeId(k));
            incident[e.head.0].push(EdgeId(k));
        }
        Ok(Graph {
            ids: self.ids,
            lookup: self.lookup,
            nu: self.nu,
            halo: self.halo,
            edges: self.edges,
            incident,
        })
    }
}

impl Graph {
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        (0..self.ids.len()).map(NodeId)
    }

    pub fn id(&self, v: NodeId) -> &str {
        &self.ids[v.0]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn node(&self, id: &str) -> Result<NodeId, GraphError> {
        self.lookup
            .get(id)
            .map(|&i| NodeId(i))
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    pub fn nu(&self, v: NodeId) -> f64 {
        self.nu[v.0]
    }

    pub fn nu_slice(&self) -> &[f64] {
        &self.nu
    }

    /// Extra μ-degree of `v` toward the implicit absorbing layer.
    pub fn halo(&self, v: NodeId) -> f64 {
        self.halo[v.0]
    }

    pub fn halo_slice(&self) -> &[f64] {
        &self.halo
    }

    pub fn has_halo(&self) -> bool {
        self.halo.iter().any(|&h| h > 0.0)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.0]
    }

    pub fn incident(&self, v: NodeId) -> &[EdgeId] {
        &self.incident[v.0]
    }

    /// `(edge, neighbour, mu)` for every edge at `v`, in edge-list order.
    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = (EdgeId, NodeId, f64)> + '_ {
        self.incident[v.0].iter().map(move |&e| {
            let edge = &self.edges[e.0];
            (e, edge.other(v), edge.mu)
        })
    }

    /// μ(v): total weight of incident edges, including halo mass.
    pub fn node_mu(&self, v: NodeId) -> f64 {
        self.incident[v.0]
            .iter()
            .map(|e| self.edges[e.0].mu)
            .sum::<f64>()
            + self.halo[v.0]
    }

    /// Same as [`Graph::node_mu`] but keyed by id.
    pub fn node_mu_by_id(&self, id: &str) -> Result<f64, GraphError> {
        Ok(self.node_mu(self.node(id)?))
    }

    pub fn total_nu(&self) -> f64 {
        self.nu.iter().sum()
    }

    /// Integer lattice coordinates when the id has the form `a,b,...`.
    pub fn coordinates(&self, v: NodeId) -> Option<Vec<i64>> {
        self.ids[v.0]
            .split(',')
            .map(|s| s.parse::<i64>().ok())
            .collect()
    }

    /// Copy of the graph with the orientation of the listed edges reversed.
    pub fn with_flipped(&self, flip: &[EdgeId]) -> Graph {
        let mut g = self.clone();
        for e in flip {
            let edge = &mut g.edges[e.0];
            std::mem::swap(&mut edge.tail, &mut edge.head);
        }
        g
    }

    /// Copy of the graph with every halo degree set to zero.
    pub fn without_halo(&self) -> Graph {
        let mut g = self.clone();
        g.halo.iter_mut().for_each(|h| *h = 0.0);
        g
    }

    pub(crate) fn check_node(&self, v: NodeId) -> Result<(), GraphError> {
        if v.0 < self.ids.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(format!("#{}", v.0)))
        }
    }

    /// Membership mask of `subset`, rejecting unknown nodes.
    pub fn mask(&self, subset: &[NodeId]) -> Result<Vec<bool>, GraphError> {
        let mut mask = vec![false; self.node_count()];
        for &v in subset {
            self.check_node(v)?;
            mask[v.0] = true;
        }
        Ok(mask)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "graph with {} nodes and {} edges",
            self.node_count(),
            self.edge_count()
        )
    }
}

/// Real-valued function on the nodes of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFunction {
    values: Vec<f64>,
}

/// Real-valued function on the edges of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFunction {
    values: Vec<f64>,
}

macro_rules! function_common {
    ($ty:ident, $count:ident, $idx:ident) => {
        impl $ty {
            pub fn new(g: &Graph, values: Vec<f64>) -> Result<Self, GraphError> {
                if values.len() != g.$count() {
                    return Err(GraphError::DomainMismatch {
                        expected: g.$count(),
                        found: values.len(),
                    });
                }
                Ok(Self { values })
            }

            pub fn zeros(g: &Graph) -> Self {
                Self {
                    values: vec![0.0; g.$count()],
                }
            }

            pub fn constant(g: &Graph, c: f64) -> Self {
                Self {
                    values: vec![c; g.$count()],
                }
            }

            pub fn from_vec_unchecked(values: Vec<f64>) -> Self {
                Self { values }
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            pub fn check_domain(&self, g: &Graph) -> Result<(), GraphError> {
                if self.values.len() == g.$count() {
                    Ok(())
                } else {
                    Err(GraphError::DomainMismatch {
                        expected: g.$count(),
                        found: self.values.len(),
                    })
                }
            }

            pub fn get(&self, i: $idx) -> f64 {
                self.values[i.0]
            }
        }

        impl Index<$idx> for $ty {
            type Output = f64;
            fn index(&self, i: $idx) -> &f64 {
                &self.values[i.0]
            }
        }
    };
}

function_common!(NodeFunction, node_count, NodeId);
function_common!(EdgeFunction, edge_count, EdgeId);

impl NodeFunction {
    pub fn from_fn(g: &Graph, f: impl FnMut(NodeId) -> f64) -> Self {
        Self {
            values: g.nodes().map(f).collect(),
        }
    }

    /// Indicator of a single node.
    pub fn delta(g: &Graph, v: NodeId) -> Result<Self, GraphError> {
        g.check_node(v)?;
        let mut f = Self::zeros(g);
        f.values[v.0] = 1.0;
        Ok(f)
    }

    pub fn indicator(g: &Graph, subset: &[NodeId]) -> Result<Self, GraphError> {
        let mask = g.mask(subset)?;
        Ok(Self {
            values: mask
                .into_iter()
                .map(|b| if b { 1.0 } else { 0.0 })
                .collect(),
        })
    }

    pub fn from_pairs<'a>(
        g: &Graph,
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self, GraphError> {
        let mut f = Self::zeros(g);
        for (id, value) in pairs {
            f.values[g.node(id)?.0] = value;
        }
        Ok(f)
    }
}

/// (I^T f)(e) = f(head) − f(tail).
pub fn incidence_transpose_apply(g: &Graph, f: &NodeFunction) -> Result<EdgeFunction, GraphError> {
    f.check_domain(g)?;
    let x = f.values();
    Ok(EdgeFunction {
        values: g
            .edges()
            .iter()
            .map(|e| x[e.head.0] - x[e.tail.0])
            .collect(),
    })
}

/// (I u)(v) = Σ_e ι_ve u(e), with ι = −1 at the tail and +1 at the head.
pub fn incidence_apply(g: &Graph, u: &EdgeFunction) -> Result<NodeFunction, GraphError> {
    u.check_domain(g)?;
    let mut out = vec![0.0; g.node_count()];
    for (e, &val) in g.edges().iter().zip(u.values()) {
        out[e.head.0] += val;
        out[e.tail.0] -= val;
    }
    Ok(NodeFunction { values: out })
}

/// μ(v) for the node with the given index.
pub fn node_mu(g: &Graph, v: NodeId) -> Result<f64, GraphError> {
    g.check_node(v)?;
    Ok(g.node_mu(v))
}

/// Node closest to the coordinate barycenter, or node 0 off-lattice.
pub fn center_node(g: &Graph) -> NodeId {
    let Some(c) = g
        .nodes()
        .map(|v| g.coordinates(v))
        .collect::<Option<Vec<_>>>()
    else {
        return NodeId(0);
    };
    let dim = c[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|k| c.iter().map(|x| x[k] as f64).sum::<f64>() / c.len() as f64)
        .collect();
    let dist = |x: &Vec<i64>| -> f64 {
        x.iter()
            .zip(&mean)
            .map(|(&a, m)| (a as f64 - m).abs())
            .sum()
    };
    let best = (0..c.len())
        .min_by(|&a, &b| dist(&c[a]).total_cmp(&dist(&c[b])))
        .expect("nonempty");
    NodeId(best)
}

/// C₁ = min_v ν(v)/μ(v); positive iff uniform local finiteness holds on `g`.
/// Nodes with μ(v) = 0 do not constrain the minimum.
pub fn ulf_constant(g: &Graph) -> f64 {
    g.nodes()
        .map(|v| g.nu(v) / g.node_mu(v))
        .fold(f64::INFINITY, f64::min)
}

/// Node-induced subgraph. Nodes and kept edges retain their weights; the
/// μ-mass of dropped edges leaving `subset` is added to the halo of the
/// endpoint that stays.
pub fn induced_subgraph(g: &Graph, subset: &[NodeId]) -> Result<Graph, GraphError> {
    if subset.is_empty() {
        return Err(GraphError::InvalidParameter(
            "induced subgraph needs a nonempty node set".into(),
        ));
    }
    let mask = g.mask(subset)?;
    let mut remap = vec![usize::MAX; g.node_count()];
    let mut b = GraphBuilder::with_capacity(subset.len(), g.edge_count());
    // keep the ambient node order so the result is independent of `subset` order
    for v in g.nodes().filter(|v| mask[v.0]) {
        let nv = b.add_node(g.id(v), g.nu(v))?;
        b.add_halo(nv, g.halo(v))?;
        remap[v.0] = nv.0;
    }
    for e in g.edges() {
        match (mask[e.tail.0], mask[e.head.0]) {
            (true, true) => {
                b.add_edge(NodeId(remap[e.tail.0]), NodeId(remap[e.head.0]), e.mu)?;
            }
            (true, false) => b.add_halo(NodeId(remap[e.tail.0]), e.mu)?,
            (false, true) => b.add_halo(NodeId(remap[e.head.0]), e.mu)?,
            (false, false) => {}
        }
    }
    b.build()
}

/// True iff every node is reachable from node 0, ignoring orientation.
pub fn is_connected(g: &Graph) -> bool {
    let n = g.node_count();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([NodeId(0)]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for (_, w, _) in g.neighbors(v) {
            if !seen[w.0] {
                seen[w.0] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}
