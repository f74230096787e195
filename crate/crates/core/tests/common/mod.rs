// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use reconflow_core::engine::{ApplyContext, FunctionUpdate, OperatorFunction, OperatorSetup, Record, State};
use reconflow_core::{DataflowGraph, OperatorId, OperatorMeta};

/// `n` operators `o0 -> o1 -> ...`.
pub fn chain(n: usize) -> DataflowGraph {
    let mut b = DataflowGraph::builder();
    for i in 0..n {
        b.add_operator(format!("o{i}"), OperatorMeta::one_to_one().with_cost_ms(0.1));
        if i > 0 {
            b.add_edge(format!("o{}", i - 1), format!("o{i}"));
        }
    }
    b.build().unwrap()
}

/// Emits `fanout` copies of each input to every downstream operator.
pub fn fan_out(config: &str, fanout: u64) -> OperatorFunction {
    OperatorFunction::new(config, move |_: &mut State, input: &Record, ctx: &mut ApplyContext<'_>| {
        for i in 0..fanout {
            let mut r = input.clone();
            r.insert("copy".into(), i.into());
            if ctx.downstream.is_empty() {
                ctx.forward(r);
            } else {
                ctx.emit_all(r);
            }
        }
    })
}

/// Passthrough everywhere, fan-out 2 at one-to-many operators; state counts
/// processed tuples.
pub fn setups(g: &DataflowGraph) -> BTreeMap<OperatorId, OperatorSetup> {
    g.operators()
        .map(|(id, m)| {
            let f = if m.is_one_to_many() { fan_out(&format!("{id}@v0"), 2) } else { OperatorFunction::passthrough(format!("{id}@v0")) };
            (id.clone(), OperatorSetup::new(f, State::from(0)))
        })
        .collect()
}

pub fn update(op: &OperatorId, g: &DataflowGraph) -> FunctionUpdate {
    let m = g.meta_of(op).unwrap();
    let f = if m.is_one_to_many() { fan_out(&format!("{op}@v1"), 2) } else { OperatorFunction::passthrough(format!("{op}@v1")) };
    FunctionUpdate::new(f)
}

/// Random connected DAG over `n` vertices; edges only go from lower to
/// higher index so the result is acyclic.
pub fn random_dag(rng: &mut SmallRng, n: usize, p: f64, one_to_many: f64) -> DataflowGraph {
    loop {
        let mut b = DataflowGraph::builder();
        let mut edges = Vec::new();
        for j in 1..n {
            let mut any = false;
            for i in 0..j {
                if rng.gen_bool(p) {
                    edges.push((i, j));
                    any = true;
                }
            }
            if !any && rng.gen_bool(0.5) {
                edges.push((rng.gen_range(0..j), j));
            }
        }
        let has_out: Vec<bool> = (0..n).map(|v| edges.iter().any(|&(a, _)| a == v)).collect();
        for v in 0..n {
            let meta = if has_out[v] && rng.gen_bool(one_to_many) { OperatorMeta::one_to_many() } else { OperatorMeta::one_to_one() };
            b.add_operator(format!("v{v}"), meta.with_cost_ms(0.05));
        }
        for (a, c) in edges {
            b.add_edge(format!("v{a}"), format!("v{c}"));
        }
        if let Ok(g) = b.build() {
            return g;
        }
    }
}

pub fn rng(seed: u64) -> SmallRng {
    SmallRng::seed_from_u64(seed)
}

use reconflow_core::engine::{run, Action, Mode, RunConfig, RunOutcome, SourceSpec};
use reconflow_core::graph::expand_parallel;
use reconflow_core::sched::{ReconfigurationRequest, Scheduler};

/// Seeded run of `g` with a reconfiguration of `ops` injected at a random
/// time while tuples are in flight.
pub fn reconfig_run(g: &DataflowGraph, ops: &[OperatorId], scheduler: Scheduler, seed: u64) -> RunOutcome {
    let mut r = rng(seed ^ 0x5eed);
    let pg = expand_parallel(g);
    let mut cfg = RunConfig::seeded(seed);
    for s in g.sources() {
        cfg = cfg.source(g.id(s).clone(), SourceSpec::count(r.gen_range(10..40), 4000.0));
    }
    let request = ops.iter().fold(ReconfigurationRequest::new(), |req, op| req.with(op.clone(), update(op, g)));
    let at = r.gen_range(0..8_000);
    run(&pg, &setups(g), cfg, Mode::Deterministic, vec![(at, Action::Reconfigure { request, scheduler })]).unwrap()
}

/// Random non-empty subset of the operators of `g`.
pub fn random_ops(rng: &mut SmallRng, g: &DataflowGraph) -> Vec<OperatorId> {
    loop {
        let ops: Vec<OperatorId> = g.ids().iter().filter(|_| rng.gen_bool(0.35)).cloned().collect();
        if !ops.is_empty() {
            return ops;
        }
    }
}
