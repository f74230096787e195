// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use super::{DataflowGraph, OperatorId};
use crate::error::GraphError;

/// Strict ancestors of `op` declared one-to-many.
pub fn one_to_many_ancestors(
    graph: &DataflowGraph,
    op: &OperatorId,
) -> Result<BTreeSet<OperatorId>, GraphError> {
    let v = graph.require(op)?;
    let anc = graph.ancestors(v);
    Ok((0..graph.len())
        .filter(|&u| anc[u] && graph.meta(u).is_one_to_many())
        .map(|u| graph.id(u).clone())
        .collect())
}

/// Reconfiguration set extended with the earliest one-to-many ancestors of
/// every reconfiguration operator.
///
/// With `pruning_enabled`, ancestors removable by [`prune_ancestors`] are
/// dropped before the earliest ones are selected. When several one-to-many
/// ancestors are incomparable, all of them are kept.
pub fn extend_reconfig_set(
    graph: &DataflowGraph,
    reconfig_ops: &BTreeSet<OperatorId>,
    pruning_enabled: bool,
) -> Result<BTreeSet<OperatorId>, GraphError> {
    let mut out = reconfig_ops.clone();
    for op in reconfig_ops {
        let mut anc = one_to_many_ancestors(graph, op)?;
        if pruning_enabled {
            anc = prune_ancestors(graph, reconfig_ops, op, &anc)?;
        }
        out.extend(earliest(graph, &anc));
    }
    Ok(out)
}

/// Minimal elements of `set` under the ancestor order.
fn earliest(graph: &DataflowGraph, set: &BTreeSet<OperatorId>) -> Vec<OperatorId> {
    let idx: Vec<usize> = set.iter().map(|id| graph.index_of(id).expect("validated")).collect();
    idx.iter()
        .filter(|&&a| {
            let anc = graph.ancestors(a);
            !idx.iter().any(|&b| b != a && anc[b])
        })
        .map(|&a| graph.id(a).clone())
        .collect()
}

/// Removes the ancestors of `target` that cannot deliver two tuples of one
/// transaction to it.
///
/// An ancestor `A` is removed when either
/// 1. `A` emits at most one tuple per output edge, exactly one of its output
///    edges has a path to any reconfiguration operator, and that edge has a
///    path to `target`; or
/// 2. every path from `A` to `target` passes through an operator declared
///    `uniqueness` (strictly between the two).
pub fn prune_ancestors(
    graph: &DataflowGraph,
    reconfig_ops: &BTreeSet<OperatorId>,
    target: &OperatorId,
    ancestors: &BTreeSet<OperatorId>,
) -> Result<BTreeSet<OperatorId>, GraphError> {
    let t = graph.require(target)?;
    let n = graph.len();
    let mut in_r = vec![false; n];
    for op in reconfig_ops {
        in_r[graph.require(op)?] = true;
    }
    // reaches_r[v]: v is a reconfiguration operator or has a path to one.
    let mut reaches_r = in_r;
    for &v in graph.topo_order().iter().rev() {
        if graph.successors(v).iter().any(|&w| reaches_r[w]) {
            reaches_r[v] = true;
        }
    }
    let reaches_t = {
        let mut r = graph.ancestors(t);
        r[t] = true;
        r
    };

    let mut kept = BTreeSet::new();
    for a_id in ancestors {
        let a = graph.require(a_id)?;
        let meta = graph.meta(a);
        let rule1 = meta.per_edge_one_to_one && {
            let hits: Vec<usize> =
                graph.successors(a).iter().copied().filter(|&c| reaches_r[c]).collect();
            hits.len() == 1 && reaches_t[hits[0]]
        };
        let rule2 = !rule1 && !reaches_avoiding_uniqueness(graph, a, t);
        if !(rule1 || rule2) {
            kept.insert(a_id.clone());
        }
    }
    Ok(kept)
}

fn reaches_avoiding_uniqueness(graph: &DataflowGraph, from: usize, to: usize) -> bool {
    let mut seen = vec![false; graph.len()];
    let mut stack: Vec<usize> = graph.successors(from).to_vec();
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if seen[v] || graph.meta(v).uniqueness {
            continue;
        }
        seen[v] = true;
        stack.extend_from_slice(graph.successors(v));
    }
    false
}
