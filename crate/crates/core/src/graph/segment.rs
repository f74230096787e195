// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use super::{find_components, DataflowGraph, Edge, OperatorId, SubDag};

/// A pipelined piece of a dataflow between blocking operators.
#[derive(Debug, Clone)]
pub struct Segment {
    pub graph: DataflowGraph,
    /// Segment vertex -> operator of the original graph.
    pub origin: BTreeMap<OperatorId, OperatorId>,
}

impl Segment {
    pub fn covers(&self, op: &OperatorId) -> bool {
        self.origin.values().any(|o| o == op)
    }
}

/// Cuts the graph at every blocking operator that has both inputs and
/// outputs. The operator is split into `<id>:in`, a sink of the upstream
/// segment, and `<id>:out`, a source of the downstream one. Segments come
/// back in topological order of their first operator.
pub fn segment_by_blocking(graph: &DataflowGraph) -> Vec<Segment> {
    let split: Vec<bool> = (0..graph.len())
        .map(|v| {
            let m = graph.meta(v);
            m.blocking && !m.is_source && !m.is_sink
        })
        .collect();
    if !split.iter().any(|&s| s) {
        let origin = graph.ids().iter().map(|id| (id.clone(), id.clone())).collect();
        return vec![Segment { graph: graph.clone(), origin }];
    }

    let in_name = |v: usize| -> OperatorId {
        if split[v] {
            format!("{}:in", graph.id(v)).into()
        } else {
            graph.id(v).clone()
        }
    };
    let out_name = |v: usize| -> OperatorId {
        if split[v] {
            format!("{}:out", graph.id(v)).into()
        } else {
            graph.id(v).clone()
        }
    };

    let mut origin = BTreeMap::new();
    let mut rank = BTreeMap::new();
    let mut metas = BTreeMap::new();
    for (pos, &v) in graph.topo_order().iter().enumerate() {
        let names = if split[v] { vec![in_name(v), out_name(v)] } else { vec![in_name(v)] };
        for name in names {
            origin.insert(name.clone(), graph.id(v).clone());
            rank.insert(name.clone(), pos);
            metas.insert(name, graph.meta(v).clone());
        }
    }
    let sub = SubDag {
        vertices: origin.keys().cloned().collect(),
        edges: graph
            .edge_indices()
            .iter()
            .map(|&(a, b)| Edge { from: out_name(a), to: in_name(b) })
            .collect(),
    };

    let mut pieces: Vec<_> = find_components(&sub)
        .into_iter()
        .map(|c| {
            let first = c.vertices.iter().map(|v| rank[v]).min().unwrap_or(0);
            (first, c)
        })
        .collect();
    pieces.sort_by_key(|(first, _)| *first);

    pieces
        .into_iter()
        .map(|(_, c)| {
            let mut b = DataflowGraph::builder();
            for v in &c.vertices {
                let mut meta = metas[v].clone();
                let keep: BTreeSet<&OperatorId> = c.edges.iter().filter(|e| &e.from == v).map(|e| &e.to).collect();
                meta.edge_partitioning.retain(|to, _| keep.contains(to));
                b.add_operator(v.clone(), meta);
            }
            for e in &c.edges {
                b.add_edge(e.from.clone(), e.to.clone());
            }
            let seg_origin = c.vertices.iter().map(|v| (v.clone(), origin[v].clone())).collect();
            Segment { graph: b.build().expect("segment of a DAG is a DAG"), origin: seg_origin }
        })
        .collect()
}
