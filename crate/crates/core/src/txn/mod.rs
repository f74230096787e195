// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Transactions and conflict serializability over a [`ScheduleLog`].
//!
//! Each source tuple's scope forms one data transaction; the `Mu` events of
//! a reconfiguration form the update transaction `U`. The only conflicts are
//! a `Phi` and a `Mu` on the same worker, so data transactions never
//! conflict with each other and a schedule is serializable iff no data
//! transaction sits both before and after `U`.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::engine::{EventKind, ScheduleLog, VersionRecord};
use crate::graph::OperatorId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TxnError {
    #[error("log holds updates of two reconfigurations ({0} and {1})")]
    MultipleRequests(u64, u64),
    #[error("worker `{0}` applied the update more than once")]
    DuplicateUpdate(OperatorId),
    #[error("phi event at `{worker}` seq {seq} has no transaction id")]
    MissingTxn { worker: OperatorId, seq: u64 },
    #[error("no version records to audit")]
    MissingVersionRecords,
    #[error("version record for `{worker}` seq {seq} matches no phi event")]
    DanglingVersionRecord { worker: OperatorId, seq: u64 },
}

/// One event, located by worker and sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Operation {
    pub worker: OperatorId,
    pub operator: OperatorId,
    pub seq: u64,
    /// Input tuple of a `Phi`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuple_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataTransaction {
    pub txn_id: u64,
    pub operations: Vec<Operation>,
    /// `(a, b)`: operation `b` processed a tuple produced by operation `a`.
    /// Indices into `operations`.
    pub lineage: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateTransaction {
    pub request: u64,
    pub operations: Vec<Operation>,
}

/// Groups `Phi` events by transaction and collects the `Mu` events.
pub fn build_transactions(log: &ScheduleLog) -> Result<(Vec<DataTransaction>, Option<UpdateTransaction>), TxnError> {
    let mut data: BTreeMap<u64, Vec<Operation>> = BTreeMap::new();
    let mut parents: BTreeMap<u64, Vec<Option<u64>>> = BTreeMap::new();
    let mut update: Option<UpdateTransaction> = None;
    for (worker, wl) in log.workers() {
        let mut seen_mu = false;
        for e in &wl.events {
            let op = Operation { worker: worker.clone(), operator: wl.operator.clone(), seq: e.seq, tuple_id: e.tuple_id };
            match e.kind {
                EventKind::Phi => {
                    let txn = e.txn_id.ok_or_else(|| TxnError::MissingTxn { worker: worker.clone(), seq: e.seq })?;
                    data.entry(txn).or_default().push(op);
                    parents.entry(txn).or_default().push(e.parent_id);
                }
                EventKind::Mu => {
                    let request = e.request.unwrap_or(0);
                    let u = update.get_or_insert_with(|| UpdateTransaction { request, operations: Vec::new() });
                    if u.request != request {
                        return Err(TxnError::MultipleRequests(u.request.min(request), u.request.max(request)));
                    }
                    if seen_mu {
                        return Err(TxnError::DuplicateUpdate(worker.clone()));
                    }
                    seen_mu = true;
                    u.operations.push(op);
                }
            }
        }
    }

    let txns = data
        .into_iter()
        .map(|(txn_id, operations)| {
            let parent_of = &parents[&txn_id];
            let by_tuple: HashMap<u64, usize> =
                operations.iter().enumerate().filter_map(|(i, o)| o.tuple_id.map(|t| (t, i))).collect();
            let lineage = parent_of
                .iter()
                .enumerate()
                .filter_map(|(b, p)| p.and_then(|p| by_tuple.get(&p)).map(|&a| (a, b)))
                .collect();
            DataTransaction { txn_id, operations, lineage }
        })
        .collect();
    Ok((txns, update))
}

/// Where a data transaction goes relative to `U` in an equivalent serial
/// schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SerialPosition {
    BeforeU,
    AfterU,
    /// No conflict with `U`; either position works.
    Either,
}

/// A `Phi` and a `Mu` on the same worker, in log order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Conflict {
    pub worker: OperatorId,
    pub operator: OperatorId,
    pub phi_seq: u64,
    pub mu_seq: u64,
}

/// Transaction that has to precede and follow `U` at once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub txn_id: u64,
    pub phi_before_mu: Conflict,
    pub mu_before_phi: Conflict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SerializabilityVerdict {
    pub serializable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Number of transactions that cannot be serialized.
    pub violations: usize,
    pub transactions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request: Option<u64>,
    /// Serial position of each data transaction. Empty when not
    /// serializable.
    pub positions: BTreeMap<u64, SerialPosition>,
}

impl SerializabilityVerdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

/// Decides conflict serializability with the per-transaction split test.
pub fn check_conflict_serializable(log: &ScheduleLog) -> Result<SerializabilityVerdict, TxnError> {
    let (txns, update) = build_transactions(log)?;
    let mu_at: HashMap<&OperatorId, u64> =
        update.iter().flat_map(|u| u.operations.iter().map(|o| (&o.worker, o.seq))).collect();

    let mut positions = BTreeMap::new();
    let mut witness = None;
    let mut violations = 0;
    for t in &txns {
        let mut before: Option<Conflict> = None;
        let mut after: Option<Conflict> = None;
        for o in &t.operations {
            let Some(&mu_seq) = mu_at.get(&o.worker) else { continue };
            let c = || Conflict { worker: o.worker.clone(), operator: o.operator.clone(), phi_seq: o.seq, mu_seq };
            if o.seq < mu_seq {
                before.get_or_insert_with(c);
            } else {
                after.get_or_insert_with(c);
            }
        }
        let pos = match (before, after) {
            (Some(b), Some(a)) => {
                violations += 1;
                witness.get_or_insert(Witness { txn_id: t.txn_id, phi_before_mu: b, mu_before_phi: a });
                continue;
            }
            (Some(_), None) => SerialPosition::BeforeU,
            (None, Some(_)) => SerialPosition::AfterU,
            (None, None) => SerialPosition::Either,
        };
        positions.insert(t.txn_id, pos);
    }
    if witness.is_some() {
        positions.clear();
    }
    Ok(SerializabilityVerdict {
        serializable: witness.is_none(),
        witness,
        violations,
        transactions: txns.len(),
        request: update.map(|u| u.request),
        positions,
    })
}

/// `Phi` event whose configuration version differs from its tuple's tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VersionViolation {
    pub worker: OperatorId,
    pub seq: u64,
    pub tag: u32,
    pub applied: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VersionAudit {
    pub checked: usize,
    pub violations: Vec<VersionViolation>,
}

impl VersionAudit {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every recorded `Phi` ran under the configuration version its
/// tuple was tagged with.
pub fn audit_version_consistency(log: &ScheduleLog, records: &[VersionRecord]) -> Result<VersionAudit, TxnError> {
    if records.is_empty() {
        return Err(TxnError::MissingVersionRecords);
    }
    let mut violations = Vec::new();
    for r in records {
        let is_phi = log
            .worker(&r.worker)
            .and_then(|w| w.events.binary_search_by_key(&r.seq, |e| e.seq).ok().map(|i| w.events[i].kind))
            == Some(EventKind::Phi);
        if !is_phi {
            return Err(TxnError::DanglingVersionRecord { worker: r.worker.clone(), seq: r.seq });
        }
        if r.tag != r.applied {
            violations.push(VersionViolation { worker: r.worker.clone(), seq: r.seq, tag: r.tag, applied: r.applied });
        }
    }
    Ok(VersionAudit { checked: records.len(), violations })
}
