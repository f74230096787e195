// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Operator DAG model and the planning algorithms built on it.

mod extend;
mod mcs;
mod parallel;
mod segment;

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

pub use extend::{extend_reconfig_set, one_to_many_ancestors, prune_ancestors};
pub use mcs::{find_components, find_mcs, find_mcs_instrumented, McsCounters};
pub use parallel::{expand_parallel, ParallelGraph, WorkerKind};
pub use segment::{segment_by_blocking, Segment};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatorId(Arc<str>);

impl OperatorId {
    pub fn new(id: impl AsRef<str>) -> Self {
        OperatorId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for OperatorId {
    fn from(s: &str) -> Self {
        OperatorId::new(s)
    }
}

impl From<String> for OperatorId {
    fn from(s: String) -> Self {
        OperatorId(Arc::from(s))
    }
}

impl From<&OperatorId> for OperatorId {
    fn from(s: &OperatorId) -> Self {
        s.clone()
    }
}

/// Builds a set of ids from string literals; handy in tests and catalogs.
pub fn ids<'a>(names: impl IntoIterator<Item = &'a str>) -> BTreeSet<OperatorId> {
    names.into_iter().map(OperatorId::new).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arity {
    #[default]
    OneToOne,
    OneToMany,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partitioning {
    #[default]
    Hash,
    Range,
    Broadcast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorMeta {
    pub arity: Arity,
    pub per_edge_one_to_one: bool,
    pub uniqueness: bool,
    pub blocking: bool,
    /// Derived from the topology when the graph is built.
    #[serde(skip)]
    pub is_source: bool,
    #[serde(skip)]
    pub is_sink: bool,
    pub worker_count: u32,
    /// Default partitioning of every output edge.
    pub partitioning: Partitioning,
    /// Per-edge overrides keyed by the downstream operator.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub edge_partitioning: BTreeMap<OperatorId, Partitioning>,
    /// Per-tuple processing delay in milliseconds.
    pub cost_ms: f64,
}

impl Default for OperatorMeta {
    fn default() -> Self {
        OperatorMeta {
            arity: Arity::OneToOne,
            per_edge_one_to_one: false,
            uniqueness: false,
            blocking: false,
            is_source: false,
            is_sink: false,
            worker_count: 1,
            partitioning: Partitioning::Hash,
            edge_partitioning: BTreeMap::new(),
            cost_ms: 0.0,
        }
    }
}

impl OperatorMeta {
    pub fn one_to_one() -> Self {
        OperatorMeta::default()
    }

    pub fn one_to_many() -> Self {
        OperatorMeta { arity: Arity::OneToMany, ..OperatorMeta::default() }
    }

    /// One-to-many operator that emits at most one tuple per output edge.
    pub fn replicate() -> Self {
        OperatorMeta { arity: Arity::OneToMany, per_edge_one_to_one: true, ..OperatorMeta::default() }
    }

    pub fn with_uniqueness(mut self) -> Self {
        self.uniqueness = true;
        self
    }

    pub fn with_blocking(mut self) -> Self {
        self.blocking = true;
        self
    }

    pub fn with_workers(mut self, n: u32) -> Self {
        self.worker_count = n;
        self
    }

    pub fn with_cost_ms(mut self, cost: f64) -> Self {
        self.cost_ms = cost;
        self
    }

    pub fn with_partitioning(mut self, p: Partitioning) -> Self {
        self.partitioning = p;
        self
    }

    pub fn with_edge_partitioning(mut self, to: impl Into<OperatorId>, p: Partitioning) -> Self {
        self.edge_partitioning.insert(to.into(), p);
        self
    }

    pub fn is_one_to_many(&self) -> bool {
        self.arity == Arity::OneToMany
    }

    pub fn partitioning_to(&self, to: &OperatorId) -> Partitioning {
        self.edge_partitioning.get(to).copied().unwrap_or(self.partitioning)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: OperatorId,
    pub to: OperatorId,
}

impl Edge {
    pub fn new(from: impl Into<OperatorId>, to: impl Into<OperatorId>) -> Self {
        Edge { from: from.into(), to: to.into() }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// A validated operator DAG.
///
/// Operators are addressed either by [`OperatorId`] or by a dense index in
/// declaration order; the algorithms work on indices internally.
#[derive(Debug, Clone)]
pub struct DataflowGraph {
    ids: Vec<OperatorId>,
    metas: Vec<OperatorMeta>,
    index: HashMap<OperatorId, usize>,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    ops: Vec<(OperatorId, OperatorMeta)>,
    edges: Vec<(OperatorId, OperatorId)>,
}

impl GraphBuilder {
    pub fn operator(mut self, id: impl Into<OperatorId>, meta: OperatorMeta) -> Self {
        self.ops.push((id.into(), meta));
        self
    }

    pub fn edge(mut self, from: impl Into<OperatorId>, to: impl Into<OperatorId>) -> Self {
        self.edges.push((from.into(), to.into()));
        self
    }

    pub fn add_operator(&mut self, id: impl Into<OperatorId>, meta: OperatorMeta) {
        self.ops.push((id.into(), meta));
    }

    pub fn add_edge(&mut self, from: impl Into<OperatorId>, to: impl Into<OperatorId>) {
        self.edges.push((from.into(), to.into()));
    }

    pub fn build(self) -> Result<DataflowGraph, GraphError> {
        DataflowGraph::from_parts(self.ops, self.edges)
    }
}

impl DataflowGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    pub fn from_parts(
        ops: Vec<(OperatorId, OperatorMeta)>,
        edges: Vec<(OperatorId, OperatorId)>,
    ) -> Result<Self, GraphError> {
        let mut index = HashMap::with_capacity(ops.len());
        let mut ids = Vec::with_capacity(ops.len());
        let mut metas = Vec::with_capacity(ops.len());
        for (id, meta) in ops {
            if meta.worker_count == 0 {
                return Err(GraphError::ZeroWorkers(id));
            }
            if meta.per_edge_one_to_one && meta.arity == Arity::OneToOne {
                return Err(GraphError::InvalidMeta {
                    op: id,
                    reason: "per_edge_one_to_one requires a one-to-many operator".into(),
                });
            }
            if !(meta.cost_ms.is_finite() && meta.cost_ms >= 0.0) {
                return Err(GraphError::InvalidMeta { op: id, reason: "cost_ms must be >= 0".into() });
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(GraphError::DuplicateOperator(id));
            }
            ids.push(id);
            metas.push(meta);
        }
        let n = ids.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut idx_edges = Vec::with_capacity(edges.len());
        for (from, to) in edges {
            let a = *index.get(&from).ok_or(GraphError::UnknownOperator(from))?;
            let b = *index.get(&to).ok_or(GraphError::UnknownOperator(to))?;
            out_adj[a].push(b);
            in_adj[b].push(a);
            idx_edges.push((a, b));
        }
        for (v, meta) in metas.iter_mut().enumerate() {
            meta.is_source = in_adj[v].is_empty();
            meta.is_sink = out_adj[v].is_empty();
            if let Some(to) = meta.edge_partitioning.keys().find(|t| {
                index.get(*t).map_or(true, |&t| !out_adj[v].contains(&t))
            }) {
                return Err(GraphError::InvalidMeta {
                    op: ids[v].clone(),
                    reason: format!("partitioning given for `{to}`, which is not a successor"),
                });
            }
        }
        let mut graph =
            DataflowGraph { ids, metas, index, edges: idx_edges, out_adj, in_adj, topo: Vec::new() };
        graph.topo = graph.compute_topo()?;
        if !graph.metas.iter().any(|m| m.is_source) {
            return Err(GraphError::NoSource);
        }
        if !graph.metas.iter().any(|m| m.is_sink) {
            return Err(GraphError::NoSink);
        }
        Ok(graph)
    }

    /// Kahn's algorithm; ready vertices leave in ascending id order.
    fn compute_topo(&self) -> Result<Vec<usize>, GraphError> {
        let n = self.ids.len();
        let mut indeg: Vec<usize> = self.in_adj.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<(&OperatorId, usize)>> = (0..n)
            .filter(|&v| indeg[v] == 0)
            .map(|v| Reverse((&self.ids[v], v)))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse((_, v))) = ready.pop() {
            order.push(v);
            for &w in &self.out_adj[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(Reverse((&self.ids[w], w)));
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).expect("some vertex left");
            return Err(GraphError::Cycle(self.ids[stuck].clone()));
        }
        Ok(order)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, id: &OperatorId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &OperatorId) -> Result<usize, GraphError> {
        self.index_of(id).ok_or_else(|| GraphError::UnknownOperator(id.clone()))
    }

    pub fn contains(&self, id: &OperatorId) -> bool {
        self.index.contains_key(id)
    }

    pub fn id(&self, v: usize) -> &OperatorId {
        &self.ids[v]
    }

    pub fn meta(&self, v: usize) -> &OperatorMeta {
        &self.metas[v]
    }

    pub fn meta_of(&self, id: &OperatorId) -> Option<&OperatorMeta> {
        self.index_of(id).map(|v| &self.metas[v])
    }

    pub fn ids(&self) -> &[OperatorId] {
        &self.ids
    }

    pub fn operators(&self) -> impl Iterator<Item = (&OperatorId, &OperatorMeta)> {
        self.ids.iter().zip(self.metas.iter())
    }

    pub fn edge_indices(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().map(|&(a, b)| Edge { from: self.ids[a].clone(), to: self.ids[b].clone() })
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    /// Topological order with ties broken by ascending [`OperatorId`].
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.metas[v].is_source)
    }

    pub fn sinks(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.metas[v].is_sink)
    }

    /// Vertices reachable from `v` by a non-empty path.
    pub fn descendants(&self, v: usize) -> Vec<bool> {
        self.reach(v, &self.out_adj)
    }

    /// Vertices with a non-empty path to `v`.
    pub fn ancestors(&self, v: usize) -> Vec<bool> {
        self.reach(v, &self.in_adj)
    }

    fn reach(&self, v: usize, adj: &[Vec<usize>]) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = adj[v].clone();
        while let Some(w) = stack.pop() {
            if !seen[w] {
                seen[w] = true;
                stack.extend_from_slice(&adj[w]);
            }
        }
        seen
    }

    pub fn has_path(&self, from: usize, to: usize) -> bool {
        from == to || self.descendants(from)[to]
    }

    /// Returns a copy with every operator's metadata passed through `f`.
    pub fn map_meta(&self, mut f: impl FnMut(&OperatorId, &mut OperatorMeta)) -> DataflowGraph {
        let mut g = self.clone();
        for (id, meta) in g.ids.iter().zip(g.metas.iter_mut()) {
            f(id, meta);
            meta.is_source = g.in_adj[g.index[id]].is_empty();
            meta.is_sink = g.out_adj[g.index[id]].is_empty();
        }
        g
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            operators: self
                .operators()
                .map(|(id, meta)| OperatorEntry { id: id.clone(), meta: meta.clone() })
                .collect(),
            edges: self.edges().map(|e| (e.from, e.to)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument =
            serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        doc.into_graph()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph serializes")
    }
}

/// On-disk form of a graph; see `docs/graph-schema.md`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub operators: Vec<OperatorEntry>,
    #[serde(default)]
    pub edges: Vec<(OperatorId, OperatorId)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorEntry {
    pub id: OperatorId,
    #[serde(flatten)]
    pub meta: OperatorMeta,
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<DataflowGraph, GraphError> {
        DataflowGraph::from_parts(
            self.operators.into_iter().map(|e| (e.id, e.meta)).collect(),
            self.edges,
        )
    }
}

/// A vertex/edge subset of some graph, identified by operator ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubDag {
    pub vertices: BTreeSet<OperatorId>,
    pub edges: BTreeSet<Edge>,
}

/// Weakly connected piece of a minimal covering sub-DAG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub vertices: BTreeSet<OperatorId>,
    pub edges: BTreeSet<Edge>,
    /// Vertices without an in-component input edge.
    pub heads: BTreeSet<OperatorId>,
    /// Number of edges on the longest path inside the component.
    pub longest_path_len: usize,
}

/// Minimal covering sub-DAG with its components attached.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mcs {
    pub vertices: BTreeSet<OperatorId>,
    pub edges: BTreeSet<Edge>,
    pub components: Vec<Component>,
}

impl Mcs {
    pub fn subdag(&self) -> SubDag {
        SubDag { vertices: self.vertices.clone(), edges: self.edges.clone() }
    }

    pub fn component_of(&self, op: &OperatorId) -> Option<usize> {
        self.components.iter().position(|c| c.vertices.contains(op))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> DataflowGraph {
        DataflowGraph::builder()
            .operator("A", OperatorMeta::one_to_one())
            .operator("B", OperatorMeta::one_to_one())
            .operator("C", OperatorMeta::one_to_one())
            .edge("A", "B")
            .edge("B", "C")
            .build()
            .unwrap()
    }

    #[test]
    fn derives_sources_and_sinks() {
        let g = chain();
        assert!(g.meta(0).is_source && !g.meta(0).is_sink);
        assert!(g.meta(2).is_sink);
        assert_eq!(g.sources().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn rejects_cycles_and_unknown_endpoints() {
        let cyc = DataflowGraph::builder()
            .operator("S", OperatorMeta::one_to_one())
            .operator("A", OperatorMeta::one_to_one())
            .operator("B", OperatorMeta::one_to_one())
            .operator("T", OperatorMeta::one_to_one())
            .edge("S", "A")
            .edge("A", "B")
            .edge("B", "A")
            .edge("B", "T")
            .build();
        assert!(matches!(cyc, Err(GraphError::Cycle(_))));
        let unknown = DataflowGraph::builder()
            .operator("A", OperatorMeta::one_to_one())
            .edge("A", "Z")
            .build();
        assert_eq!(unknown.unwrap_err(), GraphError::UnknownOperator("Z".into()));
    }

    #[test]
    fn rejects_bad_meta() {
        let dup = DataflowGraph::builder()
            .operator("A", OperatorMeta::one_to_one())
            .operator("A", OperatorMeta::one_to_one())
            .build();
        assert!(matches!(dup, Err(GraphError::DuplicateOperator(_))));
        let zero = DataflowGraph::builder().operator("A", OperatorMeta::one_to_one().with_workers(0)).build();
        assert!(matches!(zero, Err(GraphError::ZeroWorkers(_))));
        let mut bad = OperatorMeta::one_to_one();
        bad.per_edge_one_to_one = true;
        assert!(DataflowGraph::builder().operator("A", bad).build().is_err());
        assert_eq!(DataflowGraph::builder().build().unwrap_err(), GraphError::NoSource);
    }

    #[test]
    fn topo_ties_break_by_id() {
        let g = DataflowGraph::builder()
            .operator("z", OperatorMeta::one_to_one())
            .operator("b", OperatorMeta::one_to_one())
            .operator("a", OperatorMeta::one_to_one())
            .operator("sink", OperatorMeta::one_to_one())
            .edge("z", "sink")
            .edge("b", "sink")
            .edge("a", "sink")
            .build()
            .unwrap();
        let names: Vec<_> = g.topo_order().iter().map(|&v| g.id(v).as_str()).collect();
        assert_eq!(names, ["a", "b", "z", "sink"]);
    }

    #[test]
    fn json_round_trip_keeps_topology_and_meta() {
        let text = r#"{
            "operators": [
                {"id": "src", "worker_count": 2, "edge_partitioning": {"rep": "broadcast"}},
                {"id": "rep", "arity": "one_to_many", "per_edge_one_to_one": true, "cost_ms": 1.5},
                {"id": "out"}
            ],
            "edges": [["src", "rep"], ["rep", "out"]]
        }"#;
        let g = DataflowGraph::from_json(text).unwrap();
        assert_eq!(g.meta(0).partitioning_to(&"rep".into()), Partitioning::Broadcast);
        assert_eq!(g.meta(1).cost_ms, 1.5);
        let again = DataflowGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(again.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());
        assert_eq!(again.meta(1), g.meta(1));
    }

    #[test]
    fn partitioning_override_must_name_a_successor() {
        let text = r#"{"operators": [{"id": "a", "edge_partitioning": {"x": "range"}}, {"id": "b"}],
                       "edges": [["a", "b"]]}"#;
        assert!(matches!(DataflowGraph::from_json(text), Err(GraphError::InvalidMeta { .. })));
    }
}
