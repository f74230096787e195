// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::oracle::SmallDag;
use proptest::prelude::*;
use rand::Rng;
use reconflow_core::graph::{
    extend_reconfig_set, find_components, find_mcs, find_mcs_instrumented, one_to_many_ancestors,
};
use reconflow_core::{DataflowGraph, Mcs, OperatorId, OperatorMeta};

fn check_against_oracle(dag: &SmallDag, g: &DataflowGraph, paths: &[common::oracle::PathMask], m: u64) -> Mcs {
    let got = find_mcs(g, &dag.ids(m)).unwrap();
    let expected = dag.mcs(paths, m);
    assert_eq!(dag.masks(&got.vertices, &got.edges), expected, "dag {dag:?} m {m:#b}");
    got
}

#[test]
fn mcs_matches_oracle_on_every_dag_up_to_six_vertices() {
    let start = Instant::now();
    let mut cases = 0u64;
    for n in 1..=6 {
        for dag in SmallDag::all(n) {
            let g = dag.to_graph();
            let paths = dag.paths();
            for m in 1..1u64 << n {
                check_against_oracle(&dag, &g, &paths, m);
                cases += 1;
            }
        }
    }
    // 1 + 3*2 + ... summed over n = 1..=6.
    assert!(cases > 2_000_000);
    eprintln!("{cases} cases in {:?}", start.elapsed());
}

#[test]
fn mcs_matches_oracle_on_random_dags_up_to_ten_vertices() {
    let mut rng = common::rng(0x6d63_73);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=10);
        let p = rng.gen_range(0.1..0.6);
        let dag = SmallDag::random(&mut rng, n, p);
        let g = dag.to_graph();
        let paths = dag.paths();
        let m = rng.gen_range(1..1u64 << n);
        let got = check_against_oracle(&dag, &g, &paths, m);
        check_components(&dag, &paths, &got);
    }
}

/// Cross-checks the path-union oracle against full subset enumeration.
#[test]
fn path_union_oracle_agrees_with_subset_enumeration() {
    for n in 1..=4 {
        for dag in SmallDag::all(n) {
            let paths = dag.paths();
            for m in 1..1u64 << n {
                let minimal = dag.minimal_covers_exhaustive(m);
                assert_eq!(minimal, vec![dag.mcs(&paths, m)], "dag {dag:?} m {m:#b}");
            }
        }
    }
}

fn check_components(dag: &SmallDag, paths: &[common::oracle::PathMask], mcs: &Mcs) {
    let (v, e) = dag.masks(&mcs.vertices, &mcs.edges);
    let got: BTreeSet<u64> = mcs.components.iter().map(|c| dag.masks(&c.vertices, &BTreeSet::new()).0).collect();
    assert_eq!(got, dag.components(v, e));
    assert_eq!(got.len(), mcs.components.len());
    for c in &mcs.components {
        let (cv, ce) = dag.masks(&c.vertices, &c.edges);
        assert_eq!(ce, e & edges_within(dag, cv));
        assert_eq!(c.longest_path_len, dag.longest_path(paths, ce));
        // Heads have no input inside the component, and every vertex is a
        // head or reachable from one.
        for h in &c.heads {
            let x = SmallDag::vertex_of(h);
            assert!(!dag.edges.iter().enumerate().any(|(k, &(_, b))| b == x && ce >> k & 1 == 1));
        }
        let heads = dag.masks(&c.heads, &BTreeSet::new()).0;
        assert_ne!(heads, 0);
        for x in (0..dag.n).filter(|x| cv >> x & 1 == 1 && heads >> x & 1 == 0) {
            assert!(paths.iter().any(|p| p.to == x && heads >> p.from & 1 == 1 && p.edges & !ce == 0));
        }
    }
}

fn edges_within(dag: &SmallDag, v: u64) -> u64 {
    dag.edges
        .iter()
        .enumerate()
        .filter(|(_, &(a, b))| v >> a & 1 == 1 && v >> b & 1 == 1)
        .fold(0, |m, (k, _)| m | 1 << k)
}

#[test]
fn mcs_work_is_linear_in_graph_size() {
    let mut rng = common::rng(7);
    for n in [10usize, 100, 1000, 5000] {
        let g = common::random_dag(&mut rng, n, 3.0 / n as f64, 0.0);
        let m = common::random_ops(&mut rng, &g).into_iter().collect();
        let (_, c) = find_mcs_instrumented(&g, &m).unwrap();
        let size = g.len() + g.edge_count();
        assert!(c.vertex_visits + c.edge_visits <= 6 * size, "n={n}: {c:?} for size {size}");
    }
}

#[test]
fn empty_set_and_unknown_operator() {
    let g = common::chain(3);
    assert_eq!(find_mcs(&g, &BTreeSet::new()).unwrap(), Mcs::default());
    let bad: BTreeSet<OperatorId> = [OperatorId::new("zz")].into();
    assert!(find_mcs(&g, &bad).is_err());
}

#[test]
fn components_ignore_edges_leaving_the_vertex_set() {
    let dag = SmallDag { n: 3, edges: vec![(0, 1), (1, 2)] };
    let mut sub = dag.subdag(0b101, 0b11);
    sub.vertices.insert(OperatorId::new("v0"));
    let comps = find_components(&sub);
    assert_eq!(comps.len(), 2);
    assert!(comps.iter().all(|c| c.edges.is_empty() && c.longest_path_len == 0));
}

fn arb_dag(max_n: usize) -> impl Strategy<Value = (SmallDag, u64)> {
    (1..=max_n, any::<u64>(), 0.1f64..0.7).prop_map(|(n, seed, p)| {
        let mut rng = common::rng(seed);
        let dag = SmallDag::random(&mut rng, n, p);
        let m = rng.gen_range(1..1u64 << n);
        (dag, m)
    })
}

proptest! {
    /// Two covering sub-DAGs intersect in a covering sub-DAG, so the minimal
    /// one is unique.
    #[test]
    fn covering_subdags_are_closed_under_intersection((dag, m) in arb_dag(9), extra in any::<(u64, u64, u64, u64)>()) {
        let paths = dag.paths();
        let (v, e) = dag.mcs(&paths, m);
        let full_v = (1u64 << dag.n) - 1;
        let grow = |xv: u64, xe: u64| {
            let v2 = v | (xv & full_v);
            (v2, e | (xe & edges_within(&dag, v2)))
        };
        let (a, b) = (grow(extra.0, extra.1), grow(extra.2, extra.3));
        prop_assert!(dag.is_covering(&paths, m, a.0, a.1));
        prop_assert!(dag.is_covering(&paths, m, b.0, b.1));
        prop_assert!(dag.is_covering(&paths, m, a.0 & b.0, a.1 & b.1));
    }

    #[test]
    fn mcs_is_path_closed((dag, m) in arb_dag(10)) {
        let g = dag.to_graph();
        let mcs = find_mcs(&g, &dag.ids(m)).unwrap();
        let (v, e) = dag.masks(&mcs.vertices, &mcs.edges);
        // Any path between two kept vertices stays inside.
        for p in dag.paths().iter().filter(|p| v >> p.from & 1 == 1 && v >> p.to & 1 == 1) {
            prop_assert_eq!(p.vertices & !v, 0);
            prop_assert_eq!(p.edges & !e, 0);
        }
    }

    #[test]
    fn extension_adds_earliest_one_to_many_ancestors(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = common::rng(seed);
        let g = common::random_dag(&mut rng, n, 0.3, 0.4);
        let r = common::random_ops(&mut rng, &g).into_iter().collect::<BTreeSet<_>>();
        let plain = extend_reconfig_set(&g, &r, false).unwrap();
        let pruned = extend_reconfig_set(&g, &r, true).unwrap();
        prop_assert!(r.is_subset(&pruned));
        let mut all_anc = BTreeSet::new();
        for op in &r {
            let anc = one_to_many_ancestors(&g, op).unwrap();
            // Every one-to-many ancestor is covered by an added operator
            // at or above it.
            for a in &anc {
                let ai = g.index_of(a).unwrap();
                let covered = anc.iter().filter(|x| plain.contains(*x)).any(|x| {
                    let xi = g.index_of(x).unwrap();
                    xi == ai || g.has_path(xi, ai)
                });
                prop_assert!(covered);
            }
            all_anc.extend(anc);
        }
        for x in plain.difference(&r).chain(pruned.difference(&r)) {
            prop_assert!(all_anc.contains(x));
        }
    }
}

#[test]
fn extension_keeps_incomparable_ancestors() {
    let g = DataflowGraph::builder()
        .operator("A", OperatorMeta::one_to_many())
        .operator("B", OperatorMeta::one_to_many())
        .operator("C", OperatorMeta::one_to_one())
        .edge("A", "C")
        .edge("B", "C")
        .build()
        .unwrap();
    let r: BTreeSet<OperatorId> = [OperatorId::new("C")].into();
    let ext = extend_reconfig_set(&g, &r, false).unwrap();
    assert_eq!(ext.len(), 3);
}
