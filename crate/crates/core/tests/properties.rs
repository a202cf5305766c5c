mod common;

use common::polymer;
use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::UnGraph;
use polyjepa::chem::{parse_monomer, write_monomer, Monomer};
use polyjepa::dataset::{FAMILY_A, FAMILY_B};
use polyjepa::diff::{Matrix, ParamSet, Tape};
use polyjepa::encoding::{node_rwse, rwse_from_edges};
use polyjepa::partition::{patch_pool, uncovered, SubgraphAlgorithm};
use polyjepa::pipeline::{auprc_macro, average_precision, r2, rmse};
use polyjepa::polymer::{molecular_weight, Architecture, PolymerGraph};
use proptest::prelude::*;
use std::sync::Arc;

fn library() -> Vec<&'static str> {
    FAMILY_A.iter().chain(FAMILY_B).copied().collect()
}

fn arch() -> impl Strategy<Value = Architecture> {
    prop::sample::select(Architecture::ALL.to_vec())
}

fn stoich() -> impl Strategy<Value = (f64, f64)> {
    prop::sample::select(vec![(0.5, 0.5), (0.25, 0.75), (0.75, 0.25), (0.1, 0.9), (0.6, 0.4)])
}

fn graph() -> impl Strategy<Value = PolymerGraph> {
    let n = library().len();
    (0..n, 0..n, stoich(), arch()).prop_map(|(a, b, s, arch)| {
        let lib = library();
        polymer(lib[a], lib[b], s, arch)
    })
}

fn labelled(m: &Monomer) -> UnGraph<(String, bool, i8, usize), String> {
    let mut g = UnGraph::new_undirected();
    let ids: Vec<_> = m
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            g.add_node((
                a.element.symbol().to_string(),
                a.aromatic,
                a.formal_charge,
                m.attachments_on(i),
            ))
        })
        .collect();
    for b in &m.bonds {
        g.add_edge(ids[b.a], ids[b.b], format!("{:?}", b.order));
    }
    g
}

#[test]
fn writer_output_parses_to_isomorphic_monomer() {
    for text in library() {
        let m = parse_monomer(text).unwrap();
        let written = write_monomer(&m);
        let back = parse_monomer(&written).unwrap();
        assert!(
            is_isomorphic_matching(&labelled(&m), &labelled(&back), |a, b| a == b, |a, b| a == b),
            "{text} -> {written}"
        );
        assert_eq!(write_monomer(&back), written);
    }
}

#[test]
fn molecular_weight_is_affine_in_stoichiometry() {
    let lib = library();
    for (i, a) in lib.iter().enumerate() {
        let b = lib[(i * 7 + 3) % lib.len()];
        for arch in [Architecture::Alternating, Architecture::Block] {
            let mw = |l: f64| molecular_weight(&polymer(a, b, (l, 1.0 - l), arch));
            let (m0, m1) = (mw(0.0), mw(1.0));
            for l in [0.25, 0.5] {
                let want = m0 + l * (m1 - m0);
                assert!((mw(l) - want).abs() < 1e-9, "{a}/{b} at {l}");
            }
        }
    }
}

#[test]
fn mean_rows_backward_spreads_gradient_evenly() {
    let mut p = ParamSet::new();
    p.insert(
        "x",
        Matrix::from_vec(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]),
    );
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape, true);
    let pooled = tape.mean_all_rows(bound.var("x")).unwrap();
    let w = tape.constant(Matrix::from_vec(2, 1, vec![1.0, -3.0]));
    let out = tape.matmul(pooled, w).unwrap();
    let grads = tape.backward(out).unwrap();
    let g = grads.get(bound.var("x")).unwrap();
    for r in 0..4 {
        assert_eq!(g.row(r), &[0.25, -0.75]);
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn edges_come_in_reversed_pairs(g in graph()) {
        let rev = g.reverse_edge_ids();
        for (i, e) in g.edges.iter().enumerate() {
            let j = rev[i].expect("reverse edge");
            let r = &g.edges[j];
            prop_assert_eq!((r.src, r.dst), (e.dst, e.src));
            prop_assert_eq!(r.stochastic, e.stochastic);
        }
        prop_assert!(g.validate().is_ok());
    }

    #[test]
    fn attachment_weights_sum_to_one(g in graph()) {
        for (v, total) in g.attachment_weight_sums() {
            prop_assert!((total - 1.0).abs() < 1e-9, "node {} sums to {}", v, total);
        }
    }

    #[test]
    fn rwse_entries_are_return_probabilities(g in graph()) {
        let pe = node_rwse(&g, 8);
        for r in 0..pe.rows {
            let row = pe.row(r);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
            prop_assert!(row.iter().sum::<f64>() <= 8.0 + 1e-9);
        }
    }

    #[test]
    fn rwse_follows_relabeling(g in graph(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..g.node_count()).collect();
        perm.shuffle(&mut polyjepa::seed::rng_from(&[seed]));
        let base = node_rwse(&g, 6);
        let moved = node_rwse(&g.permuted(&perm), 6);
        for (old, &new) in perm.iter().enumerate() {
            for (a, b) in base.row(old).iter().zip(moved.row(new)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rwse_ignores_global_weight_scale(g in graph(), scale in 0.01f64..100.0) {
        let edges: Vec<(usize, usize, f64)> = g.edges.iter().map(|e| (e.src, e.dst, e.weight)).collect();
        let scaled: Vec<(usize, usize, f64)> = edges.iter().map(|&(u, v, w)| (u, v, w * scale)).collect();
        let a = rwse_from_edges(g.node_count(), &edges, 6);
        let b = rwse_from_edges(g.node_count(), &scaled, 6);
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn every_pool_covers_the_graph(
        g in graph(),
        alg in prop::sample::select(SubgraphAlgorithm::ALL.to_vec()),
        frac in prop::sample::select(vec![0.05, 0.1, 0.15, 0.2, 0.4]),
        seed in any::<u64>(),
    ) {
        let pool = patch_pool(&g, alg, frac, seed).unwrap();
        let (nodes, edges) = uncovered(&g, &pool);
        prop_assert!(nodes.is_empty() && edges.is_empty());
        let rev = g.reverse_edge_ids();
        for p in &pool {
            for &e in &p.edge_ids {
                prop_assert!(p.edge_ids.contains(&rev[e].unwrap()));
            }
        }
    }

    #[test]
    fn r2_and_rmse_under_affine_maps(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40),
        scale in prop::sample::select(vec![-7.5, -0.3, 0.02, 1.0, 4.0, 1000.0]),
        shift in -100.0f64..100.0,
    ) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(y.iter().any(|&v| (v - y[0]).abs() > 1e-3));
        let map = |v: &[f64]| v.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
        let (r_a, r_b) = (r2(&y, &p).unwrap(), r2(&map(&y), &map(&p)).unwrap());
        prop_assert!(rel_close(r_a, r_b, 1e-9), "{} vs {}", r_a, r_b);
        let (e_a, e_b) = (rmse(&y, &p).unwrap(), rmse(&map(&y), &map(&p)).unwrap());
        prop_assert!(rel_close(e_b, scale.abs() * e_a, 1e-9));
    }

    #[test]
    fn ap_ignores_monotone_score_maps(
        items in prop::collection::vec((any::<bool>(), 0u8..12), 1..40),
    ) {
        let positive: Vec<bool> = items.iter().map(|i| i.0).collect();
        let scores: Vec<f64> = items.iter().map(|i| i.1 as f64 / 4.0).collect();
        let base = average_precision(&positive, &scores);
        for f in [|s: f64| s.exp(), |s: f64| 3.0 * s - 11.0, |s: f64| s.powi(3) + s, |s: f64| s.atan()] {
            let moved: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            prop_assert_eq!(average_precision(&positive, &moved), base);
        }
    }

    #[test]
    fn macro_auprc_ignores_monotone_score_maps(
        items in prop::collection::vec((0usize..3, prop::collection::vec(0u8..9, 3)), 2..30),
    ) {
        let labels: Vec<usize> = items.iter().map(|i| i.0).collect();
        let scores: Vec<Vec<f64>> = items.iter().map(|i| i.1.iter().map(|&s| s as f64).collect()).collect();
        let moved: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|s| (s / 3.0).exp()).collect()).collect();
        prop_assert_eq!(auprc_macro(&labels, &scores, 3), auprc_macro(&labels, &moved, 3));
    }
}

#[test]
fn scatter_reference_weight_sum() {
    // weighted scatter equals a plain loop
    let mut tape = Tape::new();
    let x = tape.constant(Matrix::from_vec(3, 1, vec![1.0, 10.0, 100.0]));
    let out = tape
        .scatter_weighted(x, Arc::new(vec![0, 0, 1]), Arc::new(vec![0.5, 0.25, 2.0]), 2)
        .unwrap();
    assert_eq!(tape.value(out).data, vec![3.0, 200.0]);
}
