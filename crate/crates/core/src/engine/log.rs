// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::OperatorId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Phi,
    Mu,
}

/// One operation recorded by a worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEvent {
    pub seq: u64,
    pub kind: EventKind,
    /// Set for `Phi`.
    pub txn_id: Option<u64>,
    pub tuple_id: Option<u64>,
    pub parent_id: Option<u64>,
    /// Set for `Mu`.
    pub request: Option<u64>,
    pub vtime_us: u64,
    /// Global event index; deterministic mode only.
    pub index: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerLog {
    pub operator: OperatorId,
    pub events: Vec<LogEvent>,
}

/// Per-worker totally ordered record of data and update operations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScheduleLog {
    workers: BTreeMap<OperatorId, WorkerLog>,
}

/// Export line; see `docs/log-format.md`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogLine {
    pub worker: OperatorId,
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txn_id: Option<u64>,
    pub operator: OperatorId,
    pub vtime: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuple: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("worker `{worker}`: sequence {got} follows {prev}")]
    Order { worker: OperatorId, prev: u64, got: u64 },
    #[error("worker `{worker}` is attributed to both `{a}` and `{b}`")]
    Operator { worker: OperatorId, a: OperatorId, b: OperatorId },
}

impl ScheduleLog {
    pub fn new() -> Self {
        ScheduleLog::default()
    }

    pub(crate) fn insert_worker(&mut self, worker: OperatorId, log: WorkerLog) {
        self.workers.insert(worker, log);
    }

    /// Appends an event; `seq` must exceed the worker's last one.
    pub fn push(&mut self, worker: &OperatorId, operator: &OperatorId, event: LogEvent) -> Result<(), LogError> {
        let entry = self
            .workers
            .entry(worker.clone())
            .or_insert_with(|| WorkerLog { operator: operator.clone(), events: Vec::new() });
        if &entry.operator != operator {
            return Err(LogError::Operator { worker: worker.clone(), a: entry.operator.clone(), b: operator.clone() });
        }
        if let Some(last) = entry.events.last() {
            if event.seq <= last.seq {
                return Err(LogError::Order { worker: worker.clone(), prev: last.seq, got: event.seq });
            }
        }
        entry.events.push(event);
        Ok(())
    }

    /// Convenience for building logs by hand: next `Phi` on `worker`.
    pub fn phi(&mut self, worker: &str, txn_id: u64) -> &mut Self {
        self.append(worker, EventKind::Phi, Some(txn_id), None)
    }

    /// Convenience for building logs by hand: next `Mu` on `worker`.
    pub fn mu(&mut self, worker: &str, request: u64) -> &mut Self {
        self.append(worker, EventKind::Mu, None, Some(request))
    }

    fn append(&mut self, worker: &str, kind: EventKind, txn_id: Option<u64>, request: Option<u64>) -> &mut Self {
        let id = OperatorId::new(worker);
        let seq = self.workers.get(&id).and_then(|w| w.events.last()).map_or(0, |e| e.seq + 1);
        let event = LogEvent { seq, kind, txn_id, tuple_id: None, parent_id: None, request, vtime_us: 0, index: None };
        self.push(&id, &id, event).expect("hand-built log is ordered");
        self
    }

    pub fn workers(&self) -> impl Iterator<Item = (&OperatorId, &WorkerLog)> {
        self.workers.iter()
    }

    pub fn worker(&self, id: &OperatorId) -> Option<&WorkerLog> {
        self.workers.get(id)
    }

    pub fn len(&self) -> usize {
        self.workers.values().map(|w| w.events.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.workers.values().flat_map(|w| &w.events).filter(|e| e.kind == kind).count()
    }

    /// Checks that every worker's sequence numbers strictly increase.
    pub fn validate(&self) -> Result<(), LogError> {
        for (w, log) in &self.workers {
            for pair in log.events.windows(2) {
                if pair[1].seq <= pair[0].seq {
                    return Err(LogError::Order { worker: w.clone(), prev: pair[0].seq, got: pair[1].seq });
                }
            }
        }
        Ok(())
    }

    pub fn lines(&self) -> impl Iterator<Item = LogLine> + '_ {
        self.workers.iter().flat_map(|(w, log)| {
            log.events.iter().map(move |e| LogLine {
                worker: w.clone(),
                seq: e.seq,
                kind: e.kind,
                txn_id: e.txn_id,
                operator: log.operator.clone(),
                vtime: e.vtime_us,
                tuple: e.tuple_id,
                parent: e.parent_id,
                request: e.request,
                index: e.index,
            })
        })
    }

    /// Line-delimited JSON export, workers in id order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in self.lines() {
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("log line serializes"));
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut lines: Vec<LogLine> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: LogLine =
                serde_json::from_str(raw).map_err(|e| LogError::Parse { line: i + 1, reason: e.to_string() })?;
            lines.push(line);
        }
        // Lines of one worker may be interleaved with others; order by seq.
        lines.sort_by(|a, b| (&a.worker, a.seq).cmp(&(&b.worker, b.seq)));
        let mut log = ScheduleLog::new();
        for l in lines {
            let event = LogEvent {
                seq: l.seq,
                kind: l.kind,
                txn_id: l.txn_id,
                tuple_id: l.tuple,
                parent_id: l.parent,
                request: l.request,
                vtime_us: l.vtime,
                index: l.index,
            };
            log.push(&l.worker, &l.operator, event)?;
        }
        Ok(log)
    }

    /// SHA-256 of the export; equal logs hash equal.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// Which configuration version processed one `Phi` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionRecord {
    pub worker: OperatorId,
    pub seq: u64,
    pub tag: u32,
    pub applied: u32,
}

/// Point in a worker's log where an epoch marker passed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerCrossing {
    pub worker: OperatorId,
    pub epoch: u64,
    /// Sequence number the next event of the worker will get.
    pub seq: u64,
    pub vtime_us: u64,
}
