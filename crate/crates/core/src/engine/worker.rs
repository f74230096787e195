// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Worker state machine shared by the simulated and threaded drivers.
//!
//! A worker never touches channels itself: every step returns the messages
//! to send, keyed by output port, and the driver delivers them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicI64, AtomicU32, Ordering};
use std::sync::Arc;

use super::function::{ApplyContext, FunctionUpdate, OperatorFunction, OperatorSetup, Record, State};
use super::log::{EventKind, LogEvent, MarkerCrossing, VersionRecord};
use super::message::{Ack, Control, EpochMarker, Message, RequestHandle, SinkRecord, Tuple, WorkerSnapshot};
use super::SourceSpec;
use crate::error::EngineError;
use crate::graph::{Arity, OperatorId, ParallelGraph, Partitioning, WorkerKind};

const RANGE_SPACE: u64 = 1 << 16;
const MAX_VERSIONS: usize = 4096;

/// Services a driver provides to its workers.
pub(crate) trait Env {
    fn now_us(&self) -> u64;
    fn next_tuple_id(&mut self) -> u64;
    fn next_event_index(&mut self) -> Option<u64>;
    fn ack(&mut self, ack: Ack);
    fn sink(&mut self, rec: SinkRecord);
    fn versions(&self) -> &VersionCounters;
}

/// In-flight tuple counts per version tag, plus the newest tag sources use.
#[derive(Debug)]
pub(crate) struct VersionCounters {
    counts: Vec<AtomicI64>,
    current: AtomicU32,
}

impl VersionCounters {
    pub(crate) fn new() -> Self {
        VersionCounters { counts: (0..MAX_VERSIONS).map(|_| AtomicI64::new(0)).collect(), current: AtomicU32::new(0) }
    }

    fn slot(&self, v: u32) -> &AtomicI64 {
        &self.counts[v as usize % MAX_VERSIONS]
    }

    pub(crate) fn add(&self, v: u32, d: i64) -> i64 {
        self.slot(v).fetch_add(d, Ordering::AcqRel) + d
    }

    pub(crate) fn in_flight_below(&self, v: u32) -> i64 {
        (0..v).map(|x| self.slot(x).load(Ordering::Acquire)).sum()
    }

    pub(crate) fn current(&self) -> u32 {
        self.current.load(Ordering::Acquire)
    }

    pub(crate) fn set_current(&self, v: u32) {
        self.current.store(v, Ordering::Release)
    }
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub function: OperatorFunction,
    pub state: State,
    pub version: u32,
}

#[derive(Debug)]
struct Staged {
    request: RequestHandle,
    slot: Slot,
}

#[derive(Debug, Clone, Copy)]
enum RouteMode {
    Hash,
    Range,
    Single,
    All,
}

#[derive(Debug)]
struct Route {
    target: OperatorId,
    mode: RouteMode,
    ports: Vec<usize>,
}

#[derive(Debug)]
struct Alignment {
    key: (u8, u64),
    expected: Vec<bool>,
    received: Vec<bool>,
    msg: Message,
}

/// Source tuple generation for one source worker.
#[derive(Debug)]
pub(crate) struct SourceGen {
    spec: SourceSpec,
    rate_share: f64,
    max: Option<u64>,
    pub next_seq: u64,
    next_at: Option<f64>,
    pub version: u32,
    stopped: bool,
}

impl SourceGen {
    fn new(spec: SourceSpec, workers: u32, index: u32, resume_seq: u64) -> Self {
        let max = spec.max_tuples.map(|m| {
            let n = workers as u64;
            m / n + u64::from((index as u64) < m % n)
        });
        let mut g = SourceGen {
            rate_share: 1.0 / f64::from(workers),
            spec,
            max,
            next_seq: resume_seq,
            next_at: None,
            version: 0,
            stopped: false,
        };
        g.next_at = g.first_at(g.spec.start_us as f64);
        g
    }

    fn rate_at(&self, t: f64) -> f64 {
        let mut r = 0.0;
        for &(from, rate) in &self.spec.rate_schedule {
            if (from as f64) <= t {
                r = rate;
            }
        }
        r * self.rate_share
    }

    /// First emission time at or after `t`.
    fn first_at(&self, t: f64) -> Option<f64> {
        if self.rate_at(t) > 0.0 {
            return Some(t);
        }
        self.spec
            .rate_schedule
            .iter()
            .filter(|&&(from, rate)| from as f64 > t && rate > 0.0)
            .map(|&(from, _)| from as f64)
            .next()
    }

    /// Next emission time, or `None` once the source is exhausted.
    pub(crate) fn next_emit_us(&self) -> Option<u64> {
        if self.stopped || self.max.is_some_and(|m| self.next_seq >= m) {
            return None;
        }
        let at = self.next_at?;
        if self.spec.stop_us.is_some_and(|s| at >= s as f64) {
            return None;
        }
        Some(at.ceil() as u64)
    }

    fn advance(&mut self, now: u64) {
        self.next_seq += 1;
        let t = now as f64;
        let rate = self.rate_at(t);
        self.next_at = if rate > 0.0 { Some(t + 1e6 / rate) } else { self.first_at(t) };
        // A rate change between two emissions takes effect at its boundary.
        if let (Some(at), Some(&(from, r))) = (
            self.next_at,
            self.spec.rate_schedule.iter().find(|&&(from, _)| (from as f64) > t),
        ) {
            if (from as f64) < at && r > 0.0 {
                self.next_at = Some((from as f64).max(t));
            }
        }
    }

    fn key(&self, worker: usize, seq: u64) -> u64 {
        splitmix(((worker as u64) << 32) ^ splitmix(seq)) % self.spec.key_space.max(1)
    }
}

pub(crate) struct Processed {
    pub outputs: Vec<(usize, Message)>,
    pub cost_us: u64,
}

pub(crate) struct Worker {
    pub idx: usize,
    pub id: OperatorId,
    pub logical: OperatorId,
    pub is_source: bool,
    pub is_sink: bool,
    one_to_one: bool,
    cost_us: u64,
    pub cost_factor: f64,
    pub active: Slot,
    staged: Option<Staged>,
    deferred: Vec<(LogEvent, u32, u32)>,
    versioned: bool,
    pub in_from: Vec<OperatorId>,
    pub out_to: Vec<OperatorId>,
    downstream: Vec<OperatorId>,
    routes: Vec<Route>,
    pub blocked: Vec<u32>,
    pub ended: Vec<bool>,
    aligns: Vec<Alignment>,
    declined: BTreeSet<(u8, u64)>,
    pub log: Vec<LogEvent>,
    pub versions: Vec<VersionRecord>,
    pub crossings: Vec<MarkerCrossing>,
    next_seq: u64,
    pub source: Option<SourceGen>,
}

/// Channel between two workers: edge `idx` of the expanded graph.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChannelSpec {
    pub from: usize,
    pub to: usize,
    pub to_port: usize,
}

pub(crate) struct Topology {
    pub workers: Vec<Worker>,
    pub channels: Vec<ChannelSpec>,
    /// Per worker, channel id of each output port.
    pub out_channels: Vec<Vec<usize>>,
    /// Per worker, channel id of each input port.
    pub in_channels: Vec<Vec<usize>>,
}

pub(crate) fn build_topology(
    pg: &ParallelGraph,
    setups: &BTreeMap<OperatorId, OperatorSetup>,
    sources: &BTreeMap<OperatorId, SourceSpec>,
    cost_factors: &BTreeMap<OperatorId, f64>,
) -> Result<Topology, EngineError> {
    let g = pg.graph();
    let n = g.len();
    let mut in_channels = vec![Vec::new(); n];
    let mut out_channels = vec![Vec::new(); n];
    let mut channels = Vec::with_capacity(g.edge_count());
    for (c, &(a, b)) in g.edge_indices().iter().enumerate() {
        channels.push(ChannelSpec { from: a, to: b, to_port: in_channels[b].len() });
        in_channels[b].push(c);
        out_channels[a].push(c);
    }

    let target_of = |v: usize| -> OperatorId {
        match pg.kind(v) {
            WorkerKind::Worker { logical, .. } => logical.clone(),
            WorkerKind::Replicate { target, .. } => target.clone(),
        }
    };

    let mut workers = Vec::with_capacity(n);
    for v in 0..n {
        let meta = g.meta(v);
        let logical = pg.logical_of(v).clone();
        let replicate = pg.is_replicate(v);
        let slot = if replicate {
            Slot { function: OperatorFunction::passthrough("replicate"), state: State::Null, version: 0 }
        } else {
            let setup = setups.get(&logical).ok_or_else(|| EngineError::MissingFunction(logical.clone()))?;
            Slot { function: setup.function.clone(), state: setup.state.clone(), version: 0 }
        };

        let mut routes: Vec<Route> = Vec::new();
        for (port, &c) in out_channels[v].iter().enumerate() {
            let to = channels[c].to;
            let target = target_of(to);
            let mode = if pg.is_replicate(to) {
                RouteMode::Single
            } else if replicate {
                RouteMode::All
            } else {
                match pg.logical().meta_of(&logical).map(|m| m.partitioning_to(&target)) {
                    Some(Partitioning::Range) => RouteMode::Range,
                    _ => RouteMode::Hash,
                }
            };
            match routes.iter_mut().find(|r| r.target == target) {
                Some(r) => r.ports.push(port),
                None => routes.push(Route { target, mode, ports: vec![port] }),
            }
        }
        let downstream = routes.iter().map(|r| r.target.clone()).collect();

        let source = if meta.is_source && !replicate {
            let (workers_n, index) = match pg.kind(v) {
                WorkerKind::Worker { index, .. } => (pg.logical().meta_of(&logical).map_or(1, |m| m.worker_count), *index),
                WorkerKind::Replicate { .. } => (1, 0),
            };
            let spec = sources.get(&logical).cloned().unwrap_or_else(SourceSpec::idle);
            Some(SourceGen::new(spec, workers_n, index, 0))
        } else {
            None
        };

        let ports = in_channels[v].len();
        workers.push(Worker {
            idx: v,
            id: g.id(v).clone(),
            logical,
            is_source: meta.is_source,
            is_sink: meta.is_sink,
            one_to_one: meta.arity == Arity::OneToOne,
            cost_us: (meta.cost_ms * 1000.0).round() as u64,
            cost_factor: cost_factors.get(g.id(v)).copied().unwrap_or(1.0),
            active: slot,
            staged: None,
            deferred: Vec::new(),
            versioned: false,
            in_from: in_channels[v].iter().map(|&c| g.id(channels[c].from).clone()).collect(),
            out_to: out_channels[v].iter().map(|&c| g.id(channels[c].to).clone()).collect(),
            downstream,
            routes,
            blocked: vec![0; ports],
            ended: vec![false; ports],
            aligns: Vec::new(),
            declined: BTreeSet::new(),
            log: Vec::new(),
            versions: Vec::new(),
            crossings: Vec::new(),
            next_seq: 0,
            source,
        });
    }
    Ok(Topology { workers, channels, out_channels, in_channels })
}

impl Worker {
    pub(crate) fn retained_states(&self) -> usize {
        1 + usize::from(self.staged.is_some())
    }

    pub(crate) fn next_emit_us(&self) -> Option<u64> {
        self.source.as_ref().and_then(SourceGen::next_emit_us)
    }

    /// Restores configuration and state from a snapshot.
    pub(crate) fn restore(&mut self, snap: &WorkerSnapshot, function: OperatorFunction, staged: Option<(OperatorFunction, u32, State)>) {
        self.active = Slot { function, state: snap.state.clone(), version: snap.version };
        self.staged = staged.map(|(f, v, s)| Staged {
            request: RequestHandle::new(u64::MAX),
            slot: Slot { function: f, state: s, version: v },
        });
        if let (Some(src), Some(seq)) = (self.source.as_mut(), snap.source_next_seq) {
            src.next_seq = seq;
            src.version = snap.source_version;
        }
    }

    fn log_event(&mut self, mut ev: LogEvent, env: &mut dyn Env) -> u64 {
        ev.seq = self.next_seq;
        self.next_seq += 1;
        ev.index = env.next_event_index();
        let seq = ev.seq;
        self.log.push(ev);
        seq
    }

    /// Generates and processes the next source tuple.
    pub(crate) fn emit_source(&mut self, env: &mut dyn Env) -> Result<Processed, EngineError> {
        let now = env.now_us();
        let src = self.source.as_mut().expect("source worker");
        let seq = src.next_seq;
        let key = src.key(self.idx, seq);
        let version = src.version;
        src.advance(now);
        let mut payload = Record::new();
        payload.insert("key".into(), key.into());
        payload.insert("seq".into(), seq.into());
        let tuple = Tuple {
            txn_id: ((self.idx as u64) << 40) | seq,
            tuple_id: env.next_tuple_id(),
            parent: None,
            payload,
            version_tag: version,
            source_ts_us: now,
        };
        self.process_data(None, tuple, env)
    }

    pub(crate) fn process_data(&mut self, port: Option<usize>, t: Tuple, env: &mut dyn Env) -> Result<Processed, EngineError> {
        let now = env.now_us();
        let use_staged = self.staged.as_ref().is_some_and(|s| t.version_tag >= s.slot.version);
        let slot = match (use_staged, self.staged.as_mut()) {
            (true, Some(s)) => &mut s.slot,
            _ => &mut self.active,
        };
        let mut ctx = ApplyContext::new(now, t.txn_id, t.version_tag, t.source_ts_us, &self.downstream);
        slot.function.apply(&mut slot.state, &t.payload, &mut ctx);
        let applied = slot.version;
        let fn_cost = slot.function.cost_us();
        let (outs, cost_override) = ctx.finish();

        let ev = LogEvent {
            seq: 0,
            kind: EventKind::Phi,
            txn_id: Some(t.txn_id),
            tuple_id: Some(t.tuple_id),
            parent_id: t.parent,
            request: None,
            vtime_us: now,
            index: None,
        };
        if use_staged {
            self.deferred.push((ev, t.version_tag, applied));
        } else {
            let seq = self.log_event(ev, env);
            if self.versioned {
                self.versions.push(VersionRecord { worker: self.id.clone(), seq, tag: t.version_tag, applied });
            }
        }

        if self.one_to_one && outs.len() > 1 {
            return Err(EngineError::ArityViolation { worker: self.id.clone(), count: outs.len() });
        }

        let mut outputs = Vec::with_capacity(outs.len());
        if self.is_sink {
            for (rec, _) in outs {
                env.sink(SinkRecord {
                    worker: self.id.clone(),
                    txn_id: t.txn_id,
                    payload: rec,
                    source_ts_us: t.source_ts_us,
                    received_us: now,
                    version_tag: t.version_tag,
                });
            }
        } else {
            for (rec, target) in outs {
                let route = self
                    .routes
                    .iter()
                    .find(|r| r.target == target)
                    .ok_or_else(|| EngineError::UnknownTarget { worker: self.id.clone(), target: target.clone() })?;
                let key = rec.get("key").and_then(|k| k.as_u64()).unwrap_or(t.txn_id);
                let chosen: Vec<usize> = match route.mode {
                    RouteMode::Single => vec![route.ports[0]],
                    RouteMode::All => route.ports.clone(),
                    RouteMode::Hash => vec![route.ports[(splitmix(key) % route.ports.len() as u64) as usize]],
                    RouteMode::Range => {
                        let slot = (key % RANGE_SPACE) * route.ports.len() as u64 / RANGE_SPACE;
                        vec![route.ports[slot as usize]]
                    }
                };
                let last = chosen.len() - 1;
                let mut rec = Some(rec);
                for (i, p) in chosen.into_iter().enumerate() {
                    let payload = if i == last { rec.take().expect("record") } else { rec.clone().expect("record") };
                    env.versions().add(t.version_tag, 1);
                    outputs.push((
                        p,
                        Message::Data(Tuple {
                            txn_id: t.txn_id,
                            tuple_id: env.next_tuple_id(),
                            parent: Some(t.tuple_id),
                            payload,
                            version_tag: t.version_tag,
                            source_ts_us: t.source_ts_us,
                        }),
                    ));
                }
            }
        }

        if port.is_some() {
            let left = env.versions().add(t.version_tag, -1);
            if left == 0 && t.version_tag < env.versions().current() {
                env.ack(Ack::VersionDrained);
            }
        }

        let base = cost_override.or(fn_cost).unwrap_or(self.cost_us);
        Ok(Processed { outputs, cost_us: (base as f64 * self.cost_factor).round() as u64 })
    }

    fn apply_update(&mut self, request: &RequestHandle, update: &FunctionUpdate, env: &mut dyn Env) {
        if request.is_aborted() {
            return;
        }
        match update.transform(&self.active.state) {
            Ok(state) => {
                self.active = Slot { function: update.new_function.clone(), state, version: self.active.version + 1 };
                self.log_mu(request.id(), env);
                env.ack(Ack::Applied { request: request.id(), worker: self.idx, at_us: env.now_us() });
            }
            Err(reason) => env.ack(Ack::TransformFailed { request: request.id(), worker: self.idx, reason }),
        }
    }

    fn log_mu(&mut self, request: u64, env: &mut dyn Env) {
        let ev = LogEvent {
            seq: 0,
            kind: EventKind::Mu,
            txn_id: None,
            tuple_id: None,
            parent_id: None,
            request: Some(request),
            vtime_us: env.now_us(),
            index: None,
        };
        self.log_event(ev, env);
    }

    fn flush_deferred(&mut self, env: &mut dyn Env) {
        for (ev, tag, applied) in std::mem::take(&mut self.deferred) {
            let seq = self.log_event(ev, env);
            self.versions.push(VersionRecord { worker: self.id.clone(), seq, tag, applied });
        }
    }

    fn snapshot(&self) -> WorkerSnapshot {
        WorkerSnapshot {
            worker: self.id.clone(),
            config_id: self.active.function.config_id().to_string(),
            version: self.active.version,
            state: self.active.state.clone(),
            staged: self
                .staged
                .as_ref()
                .map(|s| (s.slot.function.config_id().to_string(), s.slot.version, s.slot.state.clone())),
            source_next_seq: self.source.as_ref().map(|s| s.next_seq),
            source_version: self.source.as_ref().map_or(0, |s| s.version),
        }
    }

    fn forward_marker(&self, m: &Arc<EpochMarker>) -> Vec<(usize, Message)> {
        self.out_to
            .iter()
            .enumerate()
            .filter(|(_, to)| m.in_scope(to))
            .map(|(p, _)| (p, Message::Epoch(m.clone())))
            .collect()
    }

    pub(crate) fn handle_control(&mut self, c: Control, env: &mut dyn Env) -> Vec<(usize, Message)> {
        match c {
            Control::Fcm(f) => {
                if let Some(u) = &f.update {
                    self.apply_update(&f.request, u, env);
                }
                env.ack(Ack::FcmHandled { request: f.request.id(), worker: self.idx });
                match &f.propagate {
                    Some(m) => {
                        self.record_crossing(m.epoch_id, env);
                        self.forward_marker(m)
                    }
                    None => Vec::new(),
                }
            }
            Control::InjectEpoch(m) => self.on_aligned(Message::Epoch(m), env),
            Control::InjectCheckpoint(id) => self.on_aligned(Message::Checkpoint(id), env),
            Control::Install { request, version, update } => {
                if request.is_aborted() {
                    return Vec::new();
                }
                match update.transform(&self.active.state) {
                    Ok(state) => {
                        // The running configuration serves every tag issued
                        // before this version.
                        self.active.version = version.saturating_sub(1);
                        self.staged = Some(Staged {
                            request: request.clone(),
                            slot: Slot { function: update.new_function.clone(), state, version },
                        });
                        self.versioned = true;
                        env.ack(Ack::Installed { request: request.id(), worker: self.idx });
                    }
                    Err(reason) => env.ack(Ack::TransformFailed { request: request.id(), worker: self.idx, reason }),
                }
                Vec::new()
            }
            Control::Bump { request, version } => {
                if let Some(src) = self.source.as_mut() {
                    src.version = version;
                }
                env.ack(Ack::Bumped { request: request.id(), worker: self.idx });
                Vec::new()
            }
            Control::Retire { request } => {
                if let Some(st) = self.staged.take() {
                    debug_assert_eq!(st.request.id(), request.id());
                    self.active = st.slot;
                    self.log_mu(request.id(), env);
                    env.ack(Ack::Applied { request: request.id(), worker: self.idx, at_us: env.now_us() });
                }
                self.flush_deferred(env);
                Vec::new()
            }
            Control::Uninstall { request } => {
                if self.staged.as_ref().is_some_and(|s| s.request.id() == request.id()) {
                    self.staged = None;
                }
                self.flush_deferred(env);
                Vec::new()
            }
            Control::Stop => {
                if let Some(src) = self.source.as_mut() {
                    src.stopped = true;
                }
                Vec::new()
            }
        }
    }

    fn record_crossing(&mut self, epoch: u64, env: &mut dyn Env) {
        self.crossings.push(MarkerCrossing { worker: self.id.clone(), epoch, seq: self.next_seq, vtime_us: env.now_us() });
    }

    /// Handles a marker received on input `port`. Returns messages to send
    /// once the marker is aligned.
    pub(crate) fn handle_marker(&mut self, port: usize, msg: Message, env: &mut dyn Env) -> Vec<(usize, Message)> {
        let (key, scope) = match &msg {
            Message::Epoch(m) => ((0u8, m.epoch_id), m.scope.as_ref()),
            Message::Checkpoint(id) => ((1u8, *id), None),
            _ => unreachable!("not a marker"),
        };
        if self.declined.contains(&key) {
            return Vec::new();
        }
        let pos = match self.aligns.iter().position(|a| a.key == key) {
            Some(p) => p,
            None => {
                let expected = self.in_from.iter().map(|u| scope.map_or(true, |s| s.contains(u))).collect();
                let received = vec![false; self.in_from.len()];
                self.aligns.push(Alignment { key, expected, received, msg });
                self.aligns.len() - 1
            }
        };
        let a = &mut self.aligns[pos];
        if !a.expected[port] || a.received[port] {
            if a.received.iter().all(|r| !r) {
                self.aligns.remove(pos);
            }
            return Vec::new();
        }
        a.received[port] = true;
        self.blocked[port] += 1;
        let mut out = self.decline_conflicts(env);
        out.extend(self.complete_ready(env));
        out
    }

    /// A scoped epoch marker and a checkpoint marker can reach a worker in
    /// opposite orders on two inputs, each blocking the input the other one
    /// still needs. The checkpoint gives way: it is forwarded without a
    /// snapshot and reported as declined.
    fn decline_conflicts(&mut self, env: &mut dyn Env) -> Vec<(usize, Message)> {
        let mut out = Vec::new();
        loop {
            let waits_on = |x: &Alignment, y: &Alignment, ended: &[bool]| {
                (0..x.expected.len()).any(|p| x.expected[p] && !x.received[p] && !ended[p] && y.received[p])
            };
            let mut victim = None;
            'outer: for i in 0..self.aligns.len() {
                for j in 0..self.aligns.len() {
                    let (x, y) = (&self.aligns[i], &self.aligns[j]);
                    if i != j && x.key.0 == 1 && waits_on(x, y, &self.ended) && waits_on(y, x, &self.ended) {
                        victim = Some(i);
                        break 'outer;
                    }
                }
            }
            let Some(i) = victim else { return out };
            let a = self.aligns.remove(i);
            for (p, r) in a.received.iter().enumerate() {
                if *r {
                    self.blocked[p] = self.blocked[p].saturating_sub(1);
                }
            }
            self.declined.insert(a.key);
            env.ack(Ack::CheckpointDeclined { checkpoint: a.key.1 });
            out.extend((0..self.out_to.len()).map(|p| (p, Message::Checkpoint(a.key.1))));
        }
    }

    /// Completes every alignment whose expected inputs all delivered the
    /// marker or are closed.
    fn complete_ready(&mut self, env: &mut dyn Env) -> Vec<(usize, Message)> {
        let mut out = Vec::new();
        while let Some(pos) = self.aligns.iter().position(|a| {
            (0..a.expected.len()).all(|p| !a.expected[p] || a.received[p] || self.ended[p])
        }) {
            let a = self.aligns.remove(pos);
            for (p, r) in a.received.iter().enumerate() {
                if *r {
                    self.blocked[p] = self.blocked[p].saturating_sub(1);
                }
            }
            out.extend(self.on_aligned(a.msg, env));
        }
        out
    }

    fn on_aligned(&mut self, msg: Message, env: &mut dyn Env) -> Vec<(usize, Message)> {
        match msg {
            Message::Epoch(m) => {
                self.record_crossing(m.epoch_id, env);
                if let (Some(u), Some(r)) = (m.payload.get(&self.id), m.request.as_ref()) {
                    let (u, r) = (u.clone(), r.clone());
                    self.apply_update(&r, &u, env);
                }
                self.forward_marker(&m)
            }
            Message::Checkpoint(id) => {
                env.ack(Ack::Snapshot { checkpoint: id, snapshot: Box::new(self.snapshot()) });
                (0..self.out_to.len()).map(|p| (p, Message::Checkpoint(id))).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Marks an input as closed. Pending alignments that only waited on
    /// closed inputs complete here.
    pub(crate) fn close_input(&mut self, port: usize, env: &mut dyn Env) -> Vec<(usize, Message)> {
        self.ended[port] = true;
        self.complete_ready(env)
    }

    pub(crate) fn all_inputs_closed(&self) -> bool {
        !self.ended.is_empty() && self.ended.iter().all(|&e| e)
    }
}
