// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use reconflow_core::engine::RequestStatus;
use reconflow_core::sched::{FriesOptions, Scheduler};
use reconflow_core::txn::{build_transactions, check_conflict_serializable};
use reconflow_core::{DataflowGraph, OperatorMeta};

fn fig2() -> DataflowGraph {
    DataflowGraph::builder()
        .operator("SRC", OperatorMeta::one_to_one())
        .operator("FC", OperatorMeta::one_to_one().with_cost_ms(0.2))
        .operator("FM", OperatorMeta::one_to_one().with_cost_ms(0.2))
        .operator("MC", OperatorMeta::one_to_one().with_cost_ms(0.2))
        .operator("SNK", OperatorMeta::one_to_one())
        .edge("SRC", "FC")
        .edge("FC", "FM")
        .edge("FM", "MC")
        .edge("MC", "SNK")
        .build()
        .unwrap()
}

fn assert_safe(class: &str, scheduler: Scheduler, one_to_many: f64, seeds: u64) {
    let mut rejected = 0;
    for seed in 0..seeds {
        let mut r = common::rng(seed);
        let n = 2 + (seed % 6) as usize;
        let g = common::random_dag(&mut r, n, 0.4, one_to_many);
        let ops = common::random_ops(&mut r, &g);
        let out = common::reconfig_run(&g, &ops, scheduler, seed);
        if !out.rejected.is_empty() {
            rejected += 1;
            continue;
        }
        let v = check_conflict_serializable(&out.log).unwrap();
        assert!(v.serializable, "{class} seed {seed}: {:?}", v.witness);
        assert_eq!(out.requests[0].status, RequestStatus::Completed, "{class} seed {seed}");
        assert_eq!(out.metrics.in_flight, 0);
    }
    assert!(rejected < seeds / 10, "{class}: {rejected} requests rejected");
}

#[test]
fn epoch_is_safe() {
    assert_safe("epoch", Scheduler::Epoch, 0.3, 200);
}

#[test]
fn fries_is_safe_on_one_to_one_graphs() {
    assert_safe("fries", Scheduler::Fries(FriesOptions::basic()), 0.0, 200);
}

#[test]
fn extended_fries_is_safe_on_one_to_many_graphs() {
    assert_safe("fries-ext", Scheduler::Fries(FriesOptions::extended(false)), 0.4, 200);
    assert_safe("fries-pruned", Scheduler::Fries(FriesOptions::extended(true)), 0.4, 200);
}

#[test]
fn multi_version_is_safe() {
    assert_safe("multiversion", Scheduler::MultiVersion, 0.3, 200);
}

#[test]
fn naive_fcm_splits_a_transaction_on_the_fraud_chain() {
    let g = fig2();
    let ops = ["FM".into(), "MC".into()];
    let found = (0..200).find_map(|seed| {
        let out = common::reconfig_run(&g, &ops, Scheduler::NaiveFcm, seed);
        check_conflict_serializable(&out.log).unwrap().witness
    });
    let w = found.expect("no unsafe schedule in 200 seeds");
    assert_eq!(w.phi_before_mu.operator.as_str(), "FM");
    assert_eq!(w.mu_before_phi.operator.as_str(), "MC");
}

fn unsafe_count(scheduler: Scheduler, one_to_many: f64, seeds: u64) -> usize {
    (0..seeds)
        .filter(|&seed| {
            let mut r = common::rng(seed);
            let n = 2 + (seed % 6) as usize;
            let g = common::random_dag(&mut r, n, 0.4, one_to_many);
            let ops = common::random_ops(&mut r, &g);
            let out = common::reconfig_run(&g, &ops, scheduler, seed);
            !check_conflict_serializable(&out.log).unwrap().serializable
        })
        .count()
}

#[test]
fn uncoordinated_schedulers_fail_on_random_graphs() {
    assert!(unsafe_count(Scheduler::NaiveFcm, 0.0, 300) > 0);
    let basic = FriesOptions { skip_guard: true, ..FriesOptions::basic() };
    assert!(unsafe_count(Scheduler::Fries(basic), 0.5, 300) > 0);
}

/// On one-to-one graphs each data transaction touches at most one Fries
/// component.
#[test]
fn fries_transactions_touch_one_component() {
    for seed in 0..100 {
        let mut r = common::rng(seed);
        let g = common::random_dag(&mut r, 3 + (seed % 5) as usize, 0.4, 0.0);
        let ops = common::random_ops(&mut r, &g);
        let out = common::reconfig_run(&g, &ops, Scheduler::Fries(FriesOptions::basic()), seed);
        let plan = &out.requests[0].plan;
        let (txns, _) = build_transactions(&out.log).unwrap();
        for t in &txns {
            let touched: BTreeSet<usize> = t
                .operations
                .iter()
                .filter_map(|o| plan.components.iter().position(|c| c.vertices.contains(&o.worker)))
                .collect();
            assert!(touched.len() <= 1, "seed {seed}: txn {} touches {touched:?}", t.txn_id);
        }
    }
}
