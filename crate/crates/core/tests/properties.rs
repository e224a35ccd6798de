use proptest::prelude::*;

use plap_core::analysis::{exponents, lemma_fol_check};
use plap_core::graph::{
    boundary_edges, incidence_apply, incidence_transpose_apply, isoperimetric_constant,
    random_connected, EdgeFunction, EdgeId, Graph, GraphBuilder, IsoOptions, NodeFunction, NodeId,
};
use plap_core::operator::{p_laplacian, Boundary, DirichletTruncation, Exponent};
use plap_core::solver::proximal_step;

fn graph_and_values() -> impl Strategy<Value = (Graph, Vec<f64>)> {
    (3usize..14, 0usize..10, any::<u64>()).prop_flat_map(|(n, extra, seed)| {
        let g = random_connected(n, extra.min((n - 1) * (n - 2) / 2), seed).unwrap();
        let values = prop::collection::vec(-3.0f64..3.0, n);
        (Just(g), values)
    })
}

fn exponent() -> impl Strategy<Value = f64> {
    prop_oneof![Just(2.0), Just(3.0), Just(4.0), 1.1f64..5.0]
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn flipping_orientations_leaves_the_operator_unchanged(
        (g, f) in graph_and_values(),
        p in exponent(),
        mask in prop::collection::vec(any::<bool>(), 64),
    ) {
        let p = Exponent::new(p).unwrap();
        let flip: Vec<EdgeId> = (0..g.edge_count()).filter(|&e| mask[e % 64]).map(EdgeId).collect();
        let h = g.with_flipped(&flip);
        let f = NodeFunction::new(&g, f).unwrap();
        let a = p_laplacian(&g, p, &f).unwrap();
        let b = p_laplacian(&h, p, &f).unwrap();
        let scale = max_abs(a.values()).max(1.0);
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn divergence_has_zero_raw_sum((g, _) in graph_and_values(), seed in any::<u64>()) {
        let vals: Vec<f64> = (0..g.edge_count())
            .map(|e| ((seed.wrapping_mul(e as u64 + 1) % 1000) as f64 - 500.0) / 37.0)
            .collect();
        let u = EdgeFunction::new(&g, vals).unwrap();
        let iu = incidence_apply(&g, &u).unwrap();
        let total: f64 = iu.values().iter().sum();
        let scale: f64 = u.values().iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        prop_assert!(total.abs() <= 1e-12 * scale);
    }

    #[test]
    fn gradient_matches_head_minus_tail((g, f) in graph_and_values()) {
        let f = NodeFunction::new(&g, f).unwrap();
        let grad = incidence_transpose_apply(&g, &f).unwrap();
        for (e, edge) in g.edges().iter().enumerate() {
            prop_assert_eq!(grad.values()[e], f[edge.head] - f[edge.tail]);
        }
    }

    #[test]
    fn neumann_operator_has_zero_weighted_sum((g, f) in graph_and_values(), p in exponent()) {
        let p = Exponent::new(p).unwrap();
        let f = NodeFunction::new(&g, f).unwrap();
        let lf = p_laplacian(&g, p, &f).unwrap();
        let total: f64 = lf.values().iter().zip(g.nu_slice()).map(|(a, w)| a * w).sum();
        let scale: f64 = lf.values().iter().zip(g.nu_slice()).map(|(a, w)| (a * w).abs()).sum::<f64>().max(1.0);
        prop_assert!(total.abs() <= 1e-12 * scale);
    }

    #[test]
    fn quadratic_case_matches_the_weighted_laplacian_matrix((g, f) in graph_and_values()) {
        let n = g.node_count();
        let mut k = vec![vec![0.0; n]; n];
        for e in g.edges() {
            let (a, b) = (e.tail.0, e.head.0);
            k[a][a] += e.mu;
            k[b][b] += e.mu;
            k[a][b] -= e.mu;
            k[b][a] -= e.mu;
        }
        let lf = p_laplacian(&g, Exponent::new(2.0).unwrap(), &NodeFunction::new(&g, f.clone()).unwrap()).unwrap();
        for v in 0..n {
            let want: f64 = (0..n).map(|w| k[v][w] * f[w]).sum::<f64>() / g.nu_slice()[v];
            prop_assert!((lf.values()[v] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn boundary_of_complement_coincides(
        (g, _) in graph_and_values(),
        mask in prop::collection::vec(any::<bool>(), 14),
    ) {
        let inside: Vec<NodeId> = g.nodes().filter(|v| mask[v.0]).collect();
        let outside: Vec<NodeId> = g.nodes().filter(|v| !mask[v.0]).collect();
        prop_assume!(!inside.is_empty() && !outside.is_empty());
        let mut a = boundary_edges(&g, &inside).unwrap().edges;
        let mut b = boundary_edges(&g, &outside).unwrap().edges;
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn adding_halo_never_raises_a_subset_ratio(
        (g, _) in graph_and_values(),
        extra in prop::collection::vec(0.0f64..2.0, 14),
        mask in prop::collection::vec(any::<bool>(), 14),
        d in 1.5f64..4.0,
    ) {
        let mut b = GraphBuilder::new();
        for v in g.nodes() {
            let id = b.add_node(g.id(v), g.nu(v)).unwrap();
            b.add_halo(id, extra[v.0]).unwrap();
        }
        for e in g.edges() {
            b.add_edge(e.tail, e.head, e.mu).unwrap();
        }
        let h = b.build().unwrap();
        let expo = (d - 1.0) / d;
        let ratio = |g: &Graph, a: &[NodeId]| {
            let vol: f64 = a.iter().map(|&v| g.nu(v)).sum();
            vol.powf(expo) / boundary_edges(g, a).unwrap().measure(g)
        };
        let subset: Vec<NodeId> = g.nodes().filter(|v| mask[v.0]).collect();
        prop_assume!(!subset.is_empty() && subset.len() < g.node_count());
        prop_assert!(ratio(&h, &subset) <= ratio(&g, &subset));
        // the full node set only becomes a candidate once it has halo, so the
        // supremum can rise at most to its ratio
        let opts = IsoOptions::default();
        let base = isoperimetric_constant(&g, d, &opts).unwrap().value;
        let more = isoperimetric_constant(&h, d, &opts).unwrap().value;
        let all: Vec<NodeId> = g.nodes().collect();
        prop_assert!(more <= base.max(ratio(&h, &all)) * (1.0 + 1e-12));
    }

    #[test]
    fn proximal_map_is_nonexpansive(
        (g, f) in graph_and_values(),
        shift in prop::collection::vec(-1.0f64..1.0, 14),
        p in prop_oneof![Just(1.5), Just(2.0), Just(3.0)],
        tau in 0.01f64..1.0,
        dirichlet in any::<bool>(),
    ) {
        let p = Exponent::new(p).unwrap();
        let bc = if dirichlet {
            let members: Vec<NodeId> = g.nodes().filter(|v| v.0 % 3 != 0).collect();
            Boundary::Dirichlet(DirichletTruncation::new(&g, &members).unwrap())
        } else {
            Boundary::Neumann
        };
        let a = NodeFunction::new(&g, f.clone()).unwrap();
        let b = NodeFunction::new(&g, f.iter().zip(&shift).map(|(x, s)| x + s).collect()).unwrap();
        let pa = proximal_step(&g, &bc, p, &a, tau, 1e-12, 400).unwrap();
        let pb = proximal_step(&g, &bc, p, &b, tau, 1e-12, 400).unwrap();
        let nu = g.nu_slice();
        let dist = |x: &NodeFunction, y: &NodeFunction| -> f64 {
            x.values().iter().zip(y.values()).zip(nu).map(|((s, t), w)| w * (s - t) * (s - t)).sum::<f64>().sqrt()
        };
        let (before, after) = match &bc {
            // outside the truncation the proximal map sets values to zero
            Boundary::Dirichlet(tr) => {
                let mask = tr.inside_mask();
                let keep = |x: &NodeFunction| NodeFunction::from_fn(&g, |v| if mask[v.0] { x[v] } else { 0.0 });
                (dist(&keep(&a), &keep(&b)), dist(&pa, &pb))
            }
            Boundary::Neumann => (dist(&a, &b), dist(&pa, &pb)),
        };
        prop_assert!(after <= before * (1.0 + 1e-6) + 1e-9, "{after} > {before}");
    }

    #[test]
    fn lemma_inequality_holds(
        b in 1e-3f64..10.0,
        gap in 1e-6f64..100.0,
        d in 2.0f64..6.0,
        frac in 0.0f64..0.999,
    ) {
        // p ranges over [1, 2d/(d+1))
        let p = 1.0 + frac * (2.0 * d / (d + 1.0) - 1.0);
        let chk = lemma_fol_check(b * (1.0 + gap), b, p, d).unwrap();
        prop_assert!(chk.holds, "margin {}", chk.margin);
    }

    #[test]
    fn exponent_identities(d in 2.0f64..8.0, frac in 0.001f64..0.999) {
        let p = 1.0 + frac * (2.0 * d / (d + 1.0) - 1.0);
        let e = exponents(d, p).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-14 * x.abs().max(y.abs()).max(1.0);
        prop_assert!(close(e.m, d * (2.0 - p) / p));
        prop_assert!(close(1.0 - p / e.p_star, p / d));
        prop_assert!(close(e.s * p, e.m + p - 2.0));
        prop_assert!(close((e.s - 1.0) * p, e.m - 2.0));
        prop_assert!(close(1.0 / p + 1.0 / e.q, 1.0));
    }
}
