// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::function::{FunctionUpdate, Record, State};
use crate::graph::OperatorId;

/// Data tuple. `txn_id` is fixed at the source and inherited by every
/// derived tuple; `parent` links a tuple to the one it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuple {
    pub txn_id: u64,
    pub tuple_id: u64,
    pub parent: Option<u64>,
    pub payload: Record,
    pub version_tag: u32,
    pub source_ts_us: u64,
}

/// Shared view of one reconfiguration request.
#[derive(Debug, Clone)]
pub struct RequestHandle(Arc<RequestInner>);

#[derive(Debug)]
struct RequestInner {
    id: u64,
    aborted: AtomicBool,
}

impl RequestHandle {
    pub(crate) fn new(id: u64) -> Self {
        RequestHandle(Arc::new(RequestInner { id, aborted: AtomicBool::new(false) }))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn is_aborted(&self) -> bool {
        self.0.aborted.load(Ordering::Acquire)
    }

    pub(crate) fn abort(&self) {
        self.0.aborted.store(true, Ordering::Release)
    }
}

/// Epoch marker. Global markers have no scope; Fries markers are scoped to
/// one component and only travel along its edges.
#[derive(Debug, Clone)]
pub struct EpochMarker {
    pub epoch_id: u64,
    pub scope: Option<BTreeSet<OperatorId>>,
    /// Updates applied by the listed workers once aligned.
    pub payload: BTreeMap<OperatorId, FunctionUpdate>,
    pub request: Option<RequestHandle>,
}

impl EpochMarker {
    pub(crate) fn in_scope(&self, worker: &OperatorId) -> bool {
        self.scope.as_ref().map_or(true, |s| s.contains(worker))
    }
}

#[derive(Debug, Clone)]
pub enum Message {
    Data(Tuple),
    Epoch(Arc<EpochMarker>),
    Checkpoint(u64),
    /// Upstream worker has shut down (concurrent mode).
    End,
}

impl Message {
    pub fn is_data(&self) -> bool {
        matches!(self, Message::Data(_))
    }
}

/// Fast control message for one worker.
#[derive(Debug, Clone)]
pub struct Fcm {
    pub request: RequestHandle,
    pub update: Option<FunctionUpdate>,
    /// Marker the worker starts propagating after handling the update.
    pub propagate: Option<Arc<EpochMarker>>,
}

impl Fcm {
    /// Stand-alone FCM carrying `update` for request `request_id`.
    pub fn new(request_id: u64, update: Option<FunctionUpdate>) -> Self {
        Fcm { request: RequestHandle::new(request_id), update, propagate: None }
    }
}

/// Controller-to-worker messages; they bypass data channels.
#[derive(Debug, Clone)]
pub(crate) enum Control {
    Fcm(Fcm),
    InjectEpoch(Arc<EpochMarker>),
    InjectCheckpoint(u64),
    Install { request: RequestHandle, version: u32, update: FunctionUpdate },
    Bump { request: RequestHandle, version: u32 },
    Retire { request: RequestHandle },
    Uninstall { request: RequestHandle },
    /// Sources stop generating and, in concurrent mode, workers wind down.
    Stop,
}

/// Worker-to-controller notifications.
#[derive(Debug, Clone)]
pub(crate) enum Ack {
    Applied { request: u64, worker: usize, at_us: u64 },
    FcmHandled { request: u64, worker: usize },
    TransformFailed { request: u64, worker: usize, reason: String },
    Installed { request: u64, worker: usize },
    Bumped { request: u64, worker: usize },
    VersionDrained,
    CheckpointDeclined { checkpoint: u64 },
    Snapshot { checkpoint: u64, snapshot: Box<WorkerSnapshot> },
}

/// Tuple produced by a sink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinkRecord {
    pub worker: OperatorId,
    pub txn_id: u64,
    pub payload: Record,
    pub source_ts_us: u64,
    pub received_us: u64,
    pub version_tag: u32,
}

/// Configuration and state held by one worker at snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSnapshot {
    pub worker: OperatorId,
    pub config_id: String,
    pub version: u32,
    pub state: State,
    /// Second configuration held during a multi-version reconfiguration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staged: Option<(String, u32, State)>,
    /// Next source sequence number, for source workers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_next_seq: Option<u64>,
    #[serde(default)]
    pub source_version: u32,
}
