// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Slow, independent reference implementations used to check the real ones.
//! Kept free of other test helpers so other crates can pull it in by path.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::SmallRng;
use rand::seq::SliceRandom;
use rand::Rng;
use reconflow_core::engine::{EventKind, ScheduleLog};
use reconflow_core::graph::SubDag;
use reconflow_core::{DataflowGraph, Edge, OperatorId, OperatorMeta};

/// DAG on vertices `0..n` with at most 64 vertices and 64 edges, so vertex
/// and edge subsets fit in a `u64`.
#[derive(Debug, Clone)]
pub struct SmallDag {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

/// One directed path, as the set of vertices and edges on it.
#[derive(Debug, Clone, Copy)]
pub struct PathMask {
    pub from: usize,
    pub to: usize,
    pub vertices: u64,
    pub edges: u64,
}

impl SmallDag {
    /// Every DAG on `n` vertices whose edges respect the order `0..n`. Any DAG
    /// is isomorphic to one of these, so this covers all shapes.
    pub fn all(n: usize) -> impl Iterator<Item = SmallDag> {
        let slots: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..j).map(move |i| (i, j))).collect();
        let count = 1u64 << slots.len();
        (0..count).map(move |bits| SmallDag {
            n,
            edges: slots.iter().enumerate().filter(|(k, _)| bits >> k & 1 == 1).map(|(_, &e)| e).collect(),
        })
    }

    /// Random DAG; vertex labels are shuffled so edges do not always point
    /// from lower to higher index.
    pub fn random(rng: &mut SmallRng, n: usize, p: f64) -> SmallDag {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..j {
                if rng.gen_bool(p) {
                    edges.push((perm[i], perm[j]));
                }
            }
        }
        SmallDag { n, edges }
    }

    pub fn name(v: usize) -> String {
        format!("v{v}")
    }

    pub fn to_graph(&self) -> DataflowGraph {
        let mut b = DataflowGraph::builder();
        for v in 0..self.n {
            b.add_operator(Self::name(v), OperatorMeta::one_to_one());
        }
        for &(a, c) in &self.edges {
            b.add_edge(Self::name(a), Self::name(c));
        }
        b.build().expect("small dag is valid")
    }

    pub fn ids(&self, mask: u64) -> BTreeSet<OperatorId> {
        (0..self.n).filter(|v| mask >> v & 1 == 1).map(|v| OperatorId::new(Self::name(v))).collect()
    }

    pub fn vertex_of(id: &OperatorId) -> usize {
        id.as_str()[1..].parse().expect("vertex name")
    }

    pub fn edge_index(&self, from: usize, to: usize) -> usize {
        self.edges.iter().position(|&e| e == (from, to)).expect("edge exists")
    }

    /// Converts a sub-DAG to (vertex mask, edge mask).
    pub fn masks(&self, vertices: &BTreeSet<OperatorId>, edges: &BTreeSet<Edge>) -> (u64, u64) {
        let v = vertices.iter().fold(0u64, |m, id| m | 1 << Self::vertex_of(id));
        let e = edges
            .iter()
            .fold(0u64, |m, e| m | 1 << self.edge_index(Self::vertex_of(&e.from), Self::vertex_of(&e.to)));
        (v, e)
    }

    pub fn subdag(&self, v: u64, e: u64) -> SubDag {
        SubDag {
            vertices: self.ids(v),
            edges: (0..self.edges.len())
                .filter(|k| e >> k & 1 == 1)
                .map(|k| Edge::new(Self::name(self.edges[k].0), Self::name(self.edges[k].1)))
                .collect(),
        }
    }

    /// Every directed path with at least one edge, by depth-first search.
    pub fn paths(&self) -> Vec<PathMask> {
        let mut out = Vec::new();
        for start in 0..self.n {
            self.walk(start, start, 1 << start, 0, &mut out);
        }
        out
    }

    fn walk(&self, from: usize, at: usize, vertices: u64, edges: u64, out: &mut Vec<PathMask>) {
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            if a == at {
                let (v, e) = (vertices | 1 << b, edges | 1 << k);
                out.push(PathMask { from, to: b, vertices: v, edges: e });
                self.walk(from, b, v, e, out);
            }
        }
    }

    /// Sub-DAG condition: every edge's endpoints are kept.
    pub fn is_subdag(&self, v: u64, e: u64) -> bool {
        self.edges.iter().enumerate().all(|(k, &(a, b))| e >> k & 1 == 0 || (v >> a & 1 == 1 && v >> b & 1 == 1))
    }

    /// Covering conditions: `m` is kept, and every path between two members
    /// of `m` lies entirely inside `(v, e)`.
    pub fn is_covering(&self, paths: &[PathMask], m: u64, v: u64, e: u64) -> bool {
        self.is_subdag(v, e)
            && m & !v == 0
            && paths.iter().filter(|p| m >> p.from & 1 == 1 && m >> p.to & 1 == 1).all(|p| {
                p.vertices & !v == 0 && p.edges & !e == 0
            })
    }

    /// Minimal covering sub-DAG, checked rather than trusted: the union of all
    /// paths between members of `m` is covering, and dropping any single vertex
    /// or edge breaks coverage. Covering sets are closed under supersets, so a
    /// set with no covering one-element deletion has no covering proper subset.
    pub fn mcs(&self, paths: &[PathMask], m: u64) -> (u64, u64) {
        let (mut v, mut e) = (m, 0u64);
        for p in paths.iter().filter(|p| m >> p.from & 1 == 1 && m >> p.to & 1 == 1) {
            v |= p.vertices;
            e |= p.edges;
        }
        assert!(self.is_covering(paths, m, v, e), "path union must cover");
        for x in 0..self.n {
            if v >> x & 1 == 1 {
                let drop_e = self.incident(x);
                assert!(!self.is_covering(paths, m, v & !(1 << x), e & !drop_e), "vertex {x} is removable");
            }
        }
        for k in 0..self.edges.len() {
            if e >> k & 1 == 1 {
                assert!(!self.is_covering(paths, m, v, e & !(1 << k)), "edge {k} is removable");
            }
        }
        (v, e)
    }

    fn incident(&self, x: usize) -> u64 {
        self.edges.iter().enumerate().filter(|(_, &(a, b))| a == x || b == x).fold(0, |m, (k, _)| m | 1 << k)
    }

    /// Enumerates every vertex and edge subset and returns all covering
    /// sub-DAGs that have no covering proper subset. Only usable for tiny
    /// graphs.
    pub fn minimal_covers_exhaustive(&self, m: u64) -> Vec<(u64, u64)> {
        let paths = self.paths();
        let mut covers = Vec::new();
        for v in 0..1u64 << self.n {
            for e in 0..1u64 << self.edges.len() {
                if self.is_covering(&paths, m, v, e) {
                    covers.push((v, e));
                }
            }
        }
        covers
            .iter()
            .filter(|&&(v, e)| {
                !covers.iter().any(|&(v2, e2)| (v2, e2) != (v, e) && v2 & !v == 0 && e2 & !e == 0)
            })
            .copied()
            .collect()
    }

    /// Weakly connected pieces of `(v, e)` as vertex masks, via union-find.
    pub fn components(&self, v: u64, e: u64) -> BTreeSet<u64> {
        let mut uf = petgraph::unionfind::UnionFind::<usize>::new(self.n);
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            if e >> k & 1 == 1 {
                uf.union(a, b);
            }
        }
        let mut groups: BTreeMap<usize, u64> = BTreeMap::new();
        for x in (0..self.n).filter(|x| v >> x & 1 == 1) {
            *groups.entry(uf.find(x)).or_default() |= 1 << x;
        }
        groups.into_values().collect()
    }

    /// Longest path (in edges) using only edges in `e`.
    pub fn longest_path(&self, paths: &[PathMask], e: u64) -> usize {
        paths.iter().filter(|p| p.edges & !e == 0).map(|p| p.edges.count_ones() as usize).max().unwrap_or(0)
    }
}

/// Conflict-serializability by brute force: tries every serial order of the
/// data transactions and the update transaction and checks that each
/// conflicting `Phi`/`Mu` pair keeps its order.
pub fn serializable_by_enumeration(log: &ScheduleLog) -> bool {
    // (txn, worker, seq) for data ops; worker -> seq for updates.
    let mut phis: Vec<(u64, &OperatorId, u64)> = Vec::new();
    let mut mus: BTreeMap<&OperatorId, u64> = BTreeMap::new();
    for (w, wl) in log.workers() {
        for e in &wl.events {
            match e.kind {
                EventKind::Phi => phis.push((e.txn_id.expect("data op has txn"), w, e.seq)),
                EventKind::Mu => {
                    mus.insert(w, e.seq);
                }
            }
        }
    }
    // Index 0 is U, data transactions follow.
    let mut items: Vec<Option<u64>> = vec![None];
    items.extend(phis.iter().map(|p| Some(p.0)).collect::<BTreeSet<_>>());
    // Required orders: (earlier, later) by item.
    let mut pairs = Vec::new();
    for &(t, w, seq) in &phis {
        if let Some(&mu) = mus.get(w) {
            pairs.push(if seq < mu { (Some(t), None) } else { (None, Some(t)) });
        }
    }
    let mut order = Vec::with_capacity(items.len());
    let mut used = vec![false; items.len()];
    permute(&items, &mut used, &mut order, &pairs)
}

fn permute(
    items: &[Option<u64>],
    used: &mut [bool],
    order: &mut Vec<Option<u64>>,
    pairs: &[(Option<u64>, Option<u64>)],
) -> bool {
    if order.len() == items.len() {
        let pos = |x: &Option<u64>| order.iter().position(|o| o == x).unwrap();
        return pairs.iter().all(|(a, b)| pos(a) < pos(b));
    }
    for i in 0..items.len() {
        if !used[i] {
            used[i] = true;
            order.push(items[i]);
            let ok = permute(items, used, order, pairs);
            order.pop();
            used[i] = false;
            if ok {
                return true;
            }
        }
    }
    false
}

/// Random log over 2..=5 operators with up to `max_txns` data transactions
/// and an update on a random subset of operators.
pub fn random_log(rng: &mut SmallRng, max_txns: u64) -> ScheduleLog {
    let ops = rng.gen_range(2..=5);
    let txns = rng.gen_range(1..=max_txns);
    let mut per_op: Vec<Vec<Option<u64>>> = vec![Vec::new(); ops];
    for t in 1..=txns {
        let mut any = false;
        for slot in per_op.iter_mut() {
            if rng.gen_bool(0.6) {
                slot.push(Some(t));
                if rng.gen_bool(0.15) {
                    slot.push(Some(t));
                }
                any = true;
            }
        }
        if !any {
            let i = rng.gen_range(0..ops);
            per_op[i].push(Some(t));
        }
    }
    for slot in per_op.iter_mut() {
        if rng.gen_bool(0.5) {
            slot.push(None);
        }
        slot.shuffle(rng);
    }
    let mut log = ScheduleLog::new();
    for (i, slot) in per_op.iter().enumerate() {
        let w = format!("o{i}");
        for ev in slot {
            match ev {
                Some(t) => log.phi(&w, *t),
                None => log.mu(&w, 0),
            };
        }
    }
    log
}
