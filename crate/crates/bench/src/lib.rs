// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Inputs shared by the benchmarks.

use std::collections::BTreeSet;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use reconflow_core::{DataflowGraph, OperatorId, OperatorMeta};

/// Layered random DAG with about `n` operators and average out-degree
/// `degree`.
pub fn random_dag(n: usize, degree: f64, seed: u64) -> DataflowGraph {
    let mut rng = SmallRng::seed_from_u64(seed);
    let mut b = DataflowGraph::builder();
    for v in 0..n {
        b.add_operator(format!("v{v}"), OperatorMeta::one_to_one());
    }
    for j in 1..n {
        // Every vertex after the first has at least one input.
        b.add_edge(format!("v{}", rng.gen_range(0..j)), format!("v{j}"));
        let window = j.min(32);
        let extra = (degree - 1.0).max(0.0);
        let mut k = 0.0;
        while k < extra {
            if rng.gen_bool(0.5) {
                let i = j - 1 - rng.gen_range(0..window);
                b.add_edge(format!("v{i}"), format!("v{j}"));
            }
            k += 1.0;
        }
    }
    b.build().expect("generated graph is a DAG")
}

/// `k` distinct operators of `g`.
pub fn pick(g: &DataflowGraph, k: usize, seed: u64) -> BTreeSet<OperatorId> {
    let mut rng = SmallRng::seed_from_u64(seed);
    let ids = g.ids();
    let mut out = BTreeSet::new();
    while out.len() < k.min(ids.len()) {
        out.insert(ids[rng.gen_range(0..ids.len())].clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_builds() {
        let g = random_dag(500, 3.0, 1);
        assert_eq!(g.len(), 500);
        assert!(g.edge_count() >= 499);
        assert_eq!(pick(&g, 10, 2).len(), 10);
    }
}
