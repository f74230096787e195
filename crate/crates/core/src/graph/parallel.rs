// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use super::{DataflowGraph, GraphBuilder, OperatorId, OperatorMeta, Partitioning};
use crate::error::GraphError;

/// What a vertex of the expanded graph stands for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerKind {
    /// Worker `index` of logical operator `logical`.
    Worker { logical: OperatorId, index: u32 },
    /// Replicate vertex inserted after worker `sender` for a broadcast edge
    /// towards `target`.
    Replicate { sender: OperatorId, target: OperatorId },
}

/// Worker-level expansion of a logical graph.
#[derive(Debug, Clone)]
pub struct ParallelGraph {
    logical: DataflowGraph,
    graph: DataflowGraph,
    kinds: Vec<WorkerKind>,
    workers: BTreeMap<OperatorId, Vec<OperatorId>>,
}

pub fn worker_name(op: &OperatorId, index: u32) -> OperatorId {
    OperatorId::from(format!("{op}#{index}"))
}

/// Expands every operator into `worker_count` worker vertices.
///
/// Hash and range edges become full bipartite worker-to-worker channels. A
/// broadcast edge `u -> v` gets one replicate vertex per sending worker,
/// which then fans out to every worker of `v`.
pub fn expand_parallel(graph: &DataflowGraph) -> ParallelGraph {
    let mut b = GraphBuilder::default();
    let mut kinds = Vec::new();
    let mut workers: BTreeMap<OperatorId, Vec<OperatorId>> = BTreeMap::new();
    for (id, meta) in graph.operators() {
        let mut wmeta = meta.clone();
        wmeta.worker_count = 1;
        wmeta.partitioning = Partitioning::Hash;
        wmeta.edge_partitioning.clear();
        let names: Vec<OperatorId> = (0..meta.worker_count).map(|i| worker_name(id, i)).collect();
        for (i, w) in names.iter().enumerate() {
            b.add_operator(w.clone(), wmeta.clone());
            kinds.push(WorkerKind::Worker { logical: id.clone(), index: i as u32 });
        }
        workers.insert(id.clone(), names);
    }
    for &(u, v) in graph.edge_indices() {
        let (uid, vid) = (graph.id(u), graph.id(v));
        let senders = workers[uid].clone();
        let receivers = &workers[vid];
        match graph.meta(u).partitioning_to(vid) {
            Partitioning::Hash | Partitioning::Range => {
                for s in &senders {
                    for r in receivers {
                        b.add_edge(s.clone(), r.clone());
                    }
                }
            }
            Partitioning::Broadcast => {
                for s in &senders {
                    let rep = OperatorId::from(format!("{s}>{vid}"));
                    b.add_operator(rep.clone(), OperatorMeta::replicate());
                    kinds.push(WorkerKind::Replicate { sender: s.clone(), target: vid.clone() });
                    b.add_edge(s.clone(), rep.clone());
                    for r in receivers {
                        b.add_edge(rep.clone(), r.clone());
                    }
                }
            }
        }
    }
    let expanded = b.build().expect("expansion of a valid graph is valid");
    ParallelGraph { logical: graph.clone(), graph: expanded, kinds, workers }
}

impl ParallelGraph {
    pub fn logical(&self) -> &DataflowGraph {
        &self.logical
    }

    /// The worker-level DAG.
    pub fn graph(&self) -> &DataflowGraph {
        &self.graph
    }

    pub fn kind(&self, v: usize) -> &WorkerKind {
        &self.kinds[v]
    }

    /// Logical operator a vertex belongs to. Replicate vertices belong to
    /// the operator whose worker feeds them.
    pub fn logical_of(&self, v: usize) -> &OperatorId {
        match &self.kinds[v] {
            WorkerKind::Worker { logical, .. } => logical,
            WorkerKind::Replicate { sender, .. } => match &self.kinds[self.graph.index_of(sender).expect("sender")] {
                WorkerKind::Worker { logical, .. } => logical,
                WorkerKind::Replicate { .. } => unreachable!("replicates feed only workers"),
            },
        }
    }

    pub fn workers_of(&self, op: &OperatorId) -> Result<&[OperatorId], GraphError> {
        self.workers.get(op).map(Vec::as_slice).ok_or_else(|| GraphError::UnknownOperator(op.clone()))
    }

    /// Worker vertices of every operator in `ops`.
    pub fn expand_ops(&self, ops: &BTreeSet<OperatorId>) -> Result<BTreeSet<OperatorId>, GraphError> {
        let mut out = BTreeSet::new();
        for op in ops {
            out.extend(self.workers_of(op)?.iter().cloned());
        }
        Ok(out)
    }

    pub fn channel_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn is_replicate(&self, v: usize) -> bool {
        matches!(self.kinds[v], WorkerKind::Replicate { .. })
    }
}
