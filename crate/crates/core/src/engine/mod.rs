// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Dataflow execution.
//!
//! Workers process tuples one at a time, exchange data over bounded FIFO
//! channels, align epoch and checkpoint markers, and take fast control
//! messages (FCMs) between tuples. [`Simulation`] drives all workers from a
//! seeded virtual-time event loop; [`ThreadedEngine`] runs one thread per
//! worker against the wall clock.

mod checkpoint;
mod concurrent;
mod controller;
mod function;
mod log;
mod message;
mod sim;
mod worker;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use checkpoint::{CheckpointArtifact, FunctionRegistry};
pub use concurrent::{ThreadedConfig, ThreadedEngine};
pub use controller::{CheckpointPolicy, CheckpointReport, CheckpointStatus, RequestReport, RequestStatus};
pub use function::{ApplyContext, FunctionUpdate, OperatorFunction, OperatorLogic, OperatorSetup, Record, State};
pub use log::{EventKind, LogError, LogEvent, LogLine, MarkerCrossing, ScheduleLog, VersionRecord, WorkerLog};
pub use message::{EpochMarker, Fcm, Message, RequestHandle, SinkRecord, Tuple, WorkerSnapshot};
pub use sim::Simulation;

use crate::error::{EngineError, RequestError};
use crate::graph::OperatorId;
use crate::sched::{ReconfigPlan, ReconfigurationRequest, Scheduler};

/// Tuple generation at one logical source operator. The rate is shared
/// evenly by the operator's workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSpec {
    /// `(from_us, tuples_per_second)` steps, in time order.
    pub rate_schedule: Vec<(u64, f64)>,
    pub start_us: u64,
    /// No tuple is emitted at or after this time.
    pub stop_us: Option<u64>,
    /// Total tuples across all workers of the source.
    pub max_tuples: Option<u64>,
    /// Keys are drawn from `0..key_space`.
    pub key_space: u64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec { rate_schedule: Vec::new(), start_us: 0, stop_us: None, max_tuples: None, key_space: 1000 }
    }
}

impl SourceSpec {
    /// A source that never emits.
    pub fn idle() -> Self {
        SourceSpec::default()
    }

    pub fn rate(per_second: f64) -> Self {
        SourceSpec { rate_schedule: vec![(0, per_second)], ..SourceSpec::default() }
    }

    /// `n` tuples at `per_second`.
    pub fn count(n: u64, per_second: f64) -> Self {
        SourceSpec { max_tuples: Some(n), ..SourceSpec::rate(per_second) }
    }

    pub fn until(mut self, stop_us: u64) -> Self {
        self.stop_us = Some(stop_us);
        self
    }

    pub fn keys(mut self, key_space: u64) -> Self {
        self.key_space = key_space;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    /// Data messages a channel holds before the sender blocks. Markers do
    /// not count against it.
    pub channel_capacity: usize,
    /// Uniform transit delay of data messages (simulation only).
    pub data_latency_us: (u64, u64),
    /// Uniform delay of control messages and acknowledgements (simulation
    /// only).
    pub control_latency_us: (u64, u64),
    /// Multi-version install acknowledgements must arrive within this time.
    pub ack_timeout_us: u64,
    pub sources: BTreeMap<OperatorId, SourceSpec>,
    /// Hard stop; `None` runs until the dataflow is quiescent.
    pub until_us: Option<u64>,
    /// Per-worker multiplier on processing cost, for stragglers.
    pub cost_factors: BTreeMap<OperatorId, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            channel_capacity: 1024,
            data_latency_us: (50, 150),
            control_latency_us: (200, 1000),
            ack_timeout_us: 5_000_000,
            sources: BTreeMap::new(),
            until_us: None,
            cost_factors: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn seeded(seed: u64) -> Self {
        RunConfig { seed, ..RunConfig::default() }
    }

    pub fn source(mut self, op: impl Into<OperatorId>, spec: SourceSpec) -> Self {
        self.sources.insert(op.into(), spec);
        self
    }
}

/// Something the controller does at a given time.
#[derive(Debug, Clone)]
pub enum Action {
    Reconfigure { request: ReconfigurationRequest, scheduler: Scheduler },
    Checkpoint(CheckpointPolicy),
    InjectEpoch,
    /// Stop the run as if the process failed.
    Halt,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMetrics {
    pub end_us: u64,
    pub events: u64,
    pub ingested: u64,
    /// Data messages still queued or held back at stop.
    pub in_flight: u64,
    /// States each worker holds at stop (2 while a multi-version
    /// reconfiguration keeps both configurations).
    pub retained_states: BTreeMap<OperatorId, usize>,
    pub final_configs: BTreeMap<OperatorId, String>,
}

/// Everything a run produced.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub log: ScheduleLog,
    pub versions: Vec<VersionRecord>,
    pub sink: Vec<SinkRecord>,
    pub requests: Vec<RequestReport>,
    pub rejected: Vec<(u64, RequestError)>,
    pub checkpoints: Vec<CheckpointReport>,
    pub crossings: Vec<MarkerCrossing>,
    pub metrics: RunMetrics,
}

impl RunOutcome {
    pub fn plans(&self) -> impl Iterator<Item = &ReconfigPlan> {
        self.requests.iter().map(|r| &r.plan)
    }
}

/// How [`run`] executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Deterministic,
    Concurrent,
}

/// Runs a dataflow with the given timed actions and returns its outcome.
///
/// In concurrent mode action times and `until_us` are wall-clock offsets
/// from the start and simulated latencies are ignored.
pub fn run(
    pg: &crate::graph::ParallelGraph,
    setups: &BTreeMap<OperatorId, OperatorSetup>,
    config: RunConfig,
    mode: Mode,
    actions: Vec<(u64, Action)>,
) -> Result<RunOutcome, EngineError> {
    match mode {
        Mode::Deterministic => {
            let mut sim = Simulation::new(pg.clone(), setups, config)?;
            for (at, a) in actions {
                sim.schedule(at, a);
            }
            sim.run()?;
            Ok(sim.into_outcome())
        }
        Mode::Concurrent => ThreadedEngine::run(pg, setups, config, ThreadedConfig::default(), actions),
    }
}
