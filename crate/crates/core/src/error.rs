// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use crate::graph::OperatorId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(OperatorId),
    #[error("operator `{0}` declared twice")]
    DuplicateOperator(OperatorId),
    #[error("graph contains a cycle through `{0}`")]
    Cycle(OperatorId),
    #[error("graph has no source operator")]
    NoSource,
    #[error("graph has no sink operator")]
    NoSink,
    #[error("operator `{0}` has worker_count 0")]
    ZeroWorkers(OperatorId),
    #[error("operator `{op}`: {reason}")]
    InvalidMeta { op: OperatorId, reason: String },
    #[error("malformed graph document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RequestError {
    #[error("reconfiguration request is empty")]
    Empty,
    #[error("unknown operator `{0}` in request")]
    UnknownOperator(OperatorId),
    #[error("another reconfiguration (request {0}) is still active")]
    Busy(u64),
    #[error(
        "operator `{0}` has a one-to-many ancestor; the basic Fries scheduler needs the extended option"
    )]
    NeedsExtended(OperatorId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("one-to-one operator `{worker}` emitted {count} outputs for one input")]
    ArityViolation { worker: OperatorId, count: usize },
    #[error("worker `{worker}` routed a tuple to `{target}`, which is not downstream")]
    UnknownTarget { worker: OperatorId, target: OperatorId },
    #[error("no function registered for operator `{0}`")]
    MissingFunction(OperatorId),
    #[error("worker `{0}` does not exist")]
    UnknownWorker(OperatorId),
    #[error("worker `{0}` has terminated")]
    WorkerTerminated(OperatorId),
    #[error("simulation deadlocked at {vtime_us} us with {blocked} blocked workers")]
    Deadlock { vtime_us: u64, blocked: usize },
    #[error("corrupt checkpoint artifact: {0}")]
    CorruptArtifact(String),
    #[error("worker thread `{0}` panicked")]
    WorkerPanicked(OperatorId),
    #[error(transparent)]
    Request(#[from] RequestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
