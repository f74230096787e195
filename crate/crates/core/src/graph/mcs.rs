// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Component, DataflowGraph, Edge, Mcs, OperatorId, SubDag};
use crate::error::GraphError;

/// Work done by one [`find_mcs_instrumented`] call.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct McsCounters {
    pub vertex_visits: usize,
    pub edge_visits: usize,
}

/// Minimal covering sub-DAG of `m`: every vertex and edge lying on a path
/// between two members of `m`, plus `m` itself.
pub fn find_mcs(graph: &DataflowGraph, m: &BTreeSet<OperatorId>) -> Result<Mcs, GraphError> {
    find_mcs_instrumented(graph, m).map(|(mcs, _)| mcs)
}

pub fn find_mcs_instrumented(
    graph: &DataflowGraph,
    m: &BTreeSet<OperatorId>,
) -> Result<(Mcs, McsCounters), GraphError> {
    let mut counters = McsCounters::default();
    let n = graph.len();
    let mut in_m = vec![false; n];
    for id in m {
        in_m[graph.require(id)?] = true;
    }
    if m.is_empty() {
        return Ok((Mcs::default(), counters));
    }

    // Red: in M or reachable from M. Blue: in M or reaches M.
    let topo = graph.topo_order();
    let mut red = in_m.clone();
    for &v in topo {
        counters.vertex_visits += 1;
        if red[v] {
            for &w in graph.successors(v) {
                counters.edge_visits += 1;
                red[w] = true;
            }
        }
    }
    let mut blue = in_m;
    for &v in topo.iter().rev() {
        counters.vertex_visits += 1;
        if blue[v] {
            for &u in graph.predecessors(v) {
                counters.edge_visits += 1;
                blue[u] = true;
            }
        }
    }

    let keep: Vec<bool> = (0..n).map(|v| red[v] && blue[v]).collect();
    let vertices: BTreeSet<OperatorId> =
        (0..n).filter(|&v| keep[v]).map(|v| graph.id(v).clone()).collect();
    let mut edges = BTreeSet::new();
    for &(a, b) in graph.edge_indices() {
        counters.edge_visits += 1;
        if keep[a] && keep[b] {
            edges.insert(Edge { from: graph.id(a).clone(), to: graph.id(b).clone() });
        }
    }
    let sub = SubDag { vertices, edges };
    let (components, cc) = components_counted(&sub);
    counters.vertex_visits += cc.vertex_visits;
    counters.edge_visits += cc.edge_visits;
    Ok((Mcs { vertices: sub.vertices, edges: sub.edges, components }, counters))
}

/// Splits a sub-DAG into weakly connected components, ordered by their
/// smallest operator id. Edges with an endpoint outside `sub.vertices` are
/// ignored.
pub fn find_components(sub: &SubDag) -> Vec<Component> {
    components_counted(sub).0
}

fn components_counted(sub: &SubDag) -> (Vec<Component>, McsCounters) {
    let mut counters = McsCounters::default();
    let local: BTreeMap<&OperatorId, usize> =
        sub.vertices.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let names: Vec<&OperatorId> = sub.vertices.iter().collect();
    let n = names.len();
    let mut out_adj = vec![Vec::new(); n];
    let mut in_adj = vec![Vec::new(); n];
    let mut local_edges = Vec::new();
    for e in &sub.edges {
        if let (Some(&a), Some(&b)) = (local.get(&e.from), local.get(&e.to)) {
            out_adj[a].push(b);
            in_adj[b].push(a);
            local_edges.push((a, b, e));
        }
    }

    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = count;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            counters.vertex_visits += 1;
            for &w in out_adj[v].iter().chain(in_adj[v].iter()) {
                counters.edge_visits += 1;
                if comp[w] == usize::MAX {
                    comp[w] = count;
                    queue.push_back(w);
                }
            }
        }
        count += 1;
    }

    // Longest path per vertex, Kahn order over the whole sub-DAG.
    let mut indeg: Vec<usize> = in_adj.iter().map(Vec::len).collect();
    let mut depth = vec![0usize; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = queue.pop_front() {
        counters.vertex_visits += 1;
        for &w in &out_adj[v] {
            counters.edge_visits += 1;
            depth[w] = depth[w].max(depth[v] + 1);
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }

    // Vertices are visited in ascending id order, so component numbering
    // already follows the smallest member id.
    let mut out: Vec<Component> = (0..count)
        .map(|_| Component {
            vertices: BTreeSet::new(),
            edges: BTreeSet::new(),
            heads: BTreeSet::new(),
            longest_path_len: 0,
        })
        .collect();
    for v in 0..n {
        let c = &mut out[comp[v]];
        c.vertices.insert(names[v].clone());
        if in_adj[v].is_empty() {
            c.heads.insert(names[v].clone());
        }
        c.longest_path_len = c.longest_path_len.max(depth[v]);
    }
    for (a, _, e) in local_edges {
        out[comp[a]].edges.insert(e.clone());
    }
    (out, counters)
}
