// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use common::oracle::{random_log, serializable_by_enumeration};
use proptest::prelude::*;
use reconflow_core::engine::{EventKind, ScheduleLog};
use reconflow_core::txn::{check_conflict_serializable, SerialPosition};

#[test]
fn verdict_matches_serial_order_enumeration() {
    let mut rng = common::rng(0xc4ec);
    let (mut yes, mut no) = (0, 0);
    for i in 0..500 {
        let log = random_log(&mut rng, 6);
        let v = check_conflict_serializable(&log).unwrap();
        assert_eq!(v.serializable, serializable_by_enumeration(&log), "log {i}:\n{}", log.to_jsonl());
        if v.serializable {
            yes += 1;
        } else {
            no += 1;
        }
    }
    // Both outcomes must be exercised for the comparison to mean anything.
    assert!(yes > 50 && no > 50, "{yes} serializable, {no} not");
}

fn seq_of(log: &ScheduleLog, worker: &str, kind: EventKind, txn: Option<u64>) -> Vec<u64> {
    log.worker(&worker.into())
        .map(|w| w.events.iter().filter(|e| e.kind == kind && (txn.is_none() || e.txn_id == txn)).map(|e| e.seq).collect())
        .unwrap_or_default()
}

proptest! {
    /// A reported witness points at real events in the claimed order.
    #[test]
    fn witness_is_valid(seed in any::<u64>()) {
        let log = random_log(&mut common::rng(seed), 6);
        let v = check_conflict_serializable(&log).unwrap();
        prop_assert_eq!(v.witness.is_none(), v.serializable);
        if let Some(w) = v.witness {
            let b = &w.phi_before_mu;
            let a = &w.mu_before_phi;
            prop_assert!(b.phi_seq < b.mu_seq && a.mu_seq < a.phi_seq);
            prop_assert!(seq_of(&log, b.worker.as_str(), EventKind::Phi, Some(w.txn_id)).contains(&b.phi_seq));
            prop_assert!(seq_of(&log, a.worker.as_str(), EventKind::Phi, Some(w.txn_id)).contains(&a.phi_seq));
            prop_assert_eq!(seq_of(&log, b.worker.as_str(), EventKind::Mu, None), vec![b.mu_seq]);
            prop_assert_eq!(seq_of(&log, a.worker.as_str(), EventKind::Mu, None), vec![a.mu_seq]);
            prop_assert!(v.violations >= 1);
        }
    }

    /// Dropping a data transaction never turns a serializable log into a
    /// non-serializable one.
    #[test]
    fn removing_a_transaction_keeps_serializability(seed in any::<u64>(), drop in 1u64..=6) {
        let log = random_log(&mut common::rng(seed), 6);
        let mut smaller = ScheduleLog::new();
        for line in log.lines() {
            if line.kind == EventKind::Phi && line.txn_id == Some(drop) {
                continue;
            }
            match line.kind {
                EventKind::Phi => smaller.phi(line.worker.as_str(), line.txn_id.unwrap()),
                EventKind::Mu => smaller.mu(line.worker.as_str(), 0),
            };
        }
        let before = check_conflict_serializable(&log).unwrap();
        let after = check_conflict_serializable(&smaller).unwrap();
        if before.serializable {
            prop_assert!(after.serializable);
        }
        prop_assert!(after.violations <= before.violations);
    }

    /// Positions are consistent with every conflict in a serializable log.
    #[test]
    fn positions_respect_conflicts(seed in any::<u64>()) {
        let log = random_log(&mut common::rng(seed), 6);
        let v = check_conflict_serializable(&log).unwrap();
        prop_assume!(v.serializable);
        for (w, wl) in log.workers() {
            let Some(mu) = wl.events.iter().find(|e| e.kind == EventKind::Mu) else { continue };
            for e in wl.events.iter().filter(|e| e.kind == EventKind::Phi) {
                let pos = v.positions[&e.txn_id.unwrap()];
                let want = if e.seq < mu.seq { SerialPosition::BeforeU } else { SerialPosition::AfterU };
                prop_assert_eq!(pos, want, "worker {}", w);
            }
        }
    }
}

#[test]
fn jsonl_round_trip_keeps_the_verdict() {
    let mut rng = common::rng(3);
    for _ in 0..50 {
        let log = random_log(&mut rng, 6);
        let back = ScheduleLog::from_jsonl(&log.to_jsonl()).unwrap();
        assert_eq!(
            check_conflict_serializable(&log).unwrap().serializable,
            check_conflict_serializable(&back).unwrap().serializable
        );
    }
}
