// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Runtime reconfiguration for pipelined dataflows.
//!
//! The crate is split into four layers:
//!
//! - [`graph`]: the operator DAG and the pure planning algorithms (minimal
//!   covering sub-DAG, components, one-to-many extension and pruning,
//!   worker expansion, blocking segmentation).
//! - [`engine`]: workers, channels, markers and fast control messages, with a
//!   seeded discrete-event driver and a threaded driver.
//! - [`sched`]: the epoch, naive FCM, multi-version and Fries schedulers.
//! - [`txn`]: transaction reconstruction and the conflict-serializability
//!   checker used as the safety oracle.

pub mod engine;
pub mod error;
pub mod graph;
pub mod sched;
pub mod txn;

pub use error::{EngineError, GraphError, RequestError};
pub use graph::{
    Arity, Component, DataflowGraph, Edge, GraphBuilder, Mcs, OperatorId, OperatorMeta,
    Partitioning,
};
