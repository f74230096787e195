// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Seeded discrete-event driver.
//!
//! Virtual time is in microseconds. Data and control transit times are
//! drawn from the run's RNG, and a worker with several ready inputs picks
//! one at random, so different seeds explore different interleavings while
//! one seed always replays the same schedule.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use super::checkpoint::{CheckpointArtifact, FunctionRegistry};
use super::controller::{Command, Controller, Timer};
use super::function::OperatorSetup;
use super::log::{ScheduleLog, WorkerLog};
use super::message::{Ack, Control, Fcm, Message, SinkRecord};
use super::worker::{build_topology, Env, Processed, VersionCounters, Worker};
use super::{Action, RunConfig, RunMetrics, RunOutcome};
use crate::error::{EngineError, RequestError};
use crate::graph::{OperatorId, ParallelGraph};

struct SimEnv {
    now: u64,
    next_tuple: u64,
    next_index: u64,
    versions: Arc<VersionCounters>,
    acks: Vec<Ack>,
    sinks: Vec<SinkRecord>,
}

impl Env for SimEnv {
    fn now_us(&self) -> u64 {
        self.now
    }

    fn next_tuple_id(&mut self) -> u64 {
        self.next_tuple += 1;
        self.next_tuple
    }

    fn next_event_index(&mut self) -> Option<u64> {
        let i = self.next_index;
        self.next_index += 1;
        Some(i)
    }

    fn ack(&mut self, ack: Ack) {
        self.acks.push(ack);
    }

    fn sink(&mut self, rec: SinkRecord) {
        self.sinks.push(rec);
    }

    fn versions(&self) -> &VersionCounters {
        &self.versions
    }
}

struct Chan {
    from: usize,
    to: usize,
    to_port: usize,
    queue: VecDeque<(u64, Message)>,
    data: usize,
    last_arrival: u64,
    sender_waiting: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Act {
    Idle,
    Busy,
    Blocked,
}

enum EvKind {
    Wake(usize),
    Finish(usize),
    Retry(usize),
    Control(usize, Control),
    Ack(Ack),
    Timer(Timer),
    User(Action),
}

struct Ev {
    t: u64,
    tie: u64,
    seq: u64,
    kind: EvKind,
}

impl PartialEq for Ev {
    fn eq(&self, o: &Self) -> bool {
        (self.t, self.tie, self.seq) == (o.t, o.tie, o.seq)
    }
}
impl Eq for Ev {}
impl PartialOrd for Ev {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ev {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.t, self.tie, self.seq).cmp(&(o.t, o.tie, o.seq))
    }
}

/// Deterministic execution of a worker-level dataflow.
pub struct Simulation {
    pg: Arc<ParallelGraph>,
    cfg: RunConfig,
    workers: Vec<Worker>,
    chans: Vec<Chan>,
    in_channels: Vec<Vec<usize>>,
    out_channels: Vec<Vec<usize>>,
    acts: Vec<Act>,
    pending: Vec<VecDeque<(usize, Message)>>,
    control: Vec<VecDeque<Control>>,
    last_ctrl: Vec<u64>,
    wake_at: Vec<Option<u64>>,
    heap: BinaryHeap<Reverse<Ev>>,
    ev_seq: u64,
    rng: SmallRng,
    env: SimEnv,
    controller: Controller,
    rejected: Vec<(u64, RequestError)>,
    error: Option<EngineError>,
    halted: bool,
    events: u64,
}

impl Simulation {
    pub fn new(
        pg: ParallelGraph,
        setups: &BTreeMap<OperatorId, OperatorSetup>,
        cfg: RunConfig,
    ) -> Result<Self, EngineError> {
        let topo = build_topology(&pg, setups, &cfg.sources, &cfg.cost_factors)?;
        let n = topo.workers.len();
        let versions = Arc::new(VersionCounters::new());
        let g = pg.graph();
        let controller = Controller::new(
            g.ids().to_vec(),
            (0..n).map(|v| pg.logical_of(v).clone()).collect(),
            g.sources().collect(),
            versions.clone(),
            cfg.ack_timeout_us,
        );
        let chans = topo
            .channels
            .iter()
            .map(|c| Chan {
                from: c.from,
                to: c.to,
                to_port: c.to_port,
                queue: VecDeque::new(),
                data: 0,
                last_arrival: 0,
                sender_waiting: false,
            })
            .collect();
        let mut sim = Simulation {
            pg: Arc::new(pg),
            rng: SmallRng::seed_from_u64(cfg.seed),
            cfg,
            workers: topo.workers,
            chans,
            in_channels: topo.in_channels,
            out_channels: topo.out_channels,
            acts: vec![Act::Idle; n],
            pending: (0..n).map(|_| VecDeque::new()).collect(),
            control: (0..n).map(|_| VecDeque::new()).collect(),
            last_ctrl: vec![0; n],
            wake_at: vec![None; n],
            heap: BinaryHeap::new(),
            ev_seq: 0,
            env: SimEnv { now: 0, next_tuple: 0, next_index: 0, versions, acks: Vec::new(), sinks: Vec::new() },
            controller,
            rejected: Vec::new(),
            error: None,
            halted: false,
            events: 0,
        };
        for w in 0..n {
            if sim.workers[w].is_source {
                if let Some(t) = sim.workers[w].next_emit_us() {
                    sim.schedule_wake(w, t);
                }
            }
        }
        Ok(sim)
    }

    /// Rebuilds a dataflow from a completed checkpoint. Functions named in
    /// the artifact are looked up in `registry`, then in `setups`.
    pub fn restore(
        pg: ParallelGraph,
        setups: &BTreeMap<OperatorId, OperatorSetup>,
        registry: &FunctionRegistry,
        artifact: &CheckpointArtifact,
        cfg: RunConfig,
    ) -> Result<Self, EngineError> {
        let mut sim = Simulation::new(pg, setups, cfg)?;
        let max_version = artifact.apply_to(&mut sim.workers, setups, registry)?;
        sim.controller.set_version_base(max_version);
        sim.heap.clear();
        for w in 0..sim.workers.len() {
            sim.wake_at[w] = None;
            if sim.workers[w].is_source {
                if let Some(t) = sim.workers[w].next_emit_us() {
                    sim.schedule_wake(w, t);
                }
            }
        }
        Ok(sim)
    }

    pub fn parallel_graph(&self) -> &ParallelGraph {
        &self.pg
    }

    pub fn now_us(&self) -> u64 {
        self.env.now
    }

    pub fn schedule(&mut self, at_us: u64, action: Action) {
        self.push(at_us, EvKind::User(action));
    }

    /// Sends an FCM outside of any scheduler.
    pub fn send_fcm(&mut self, worker: &OperatorId, fcm: Fcm) -> Result<(), EngineError> {
        let w = self.worker_index(worker)?;
        self.send_control(w, Control::Fcm(fcm));
        Ok(())
    }

    fn worker_index(&self, worker: &OperatorId) -> Result<usize, EngineError> {
        self.pg.graph().index_of(worker).ok_or_else(|| EngineError::UnknownWorker(worker.clone()))
    }

    /// Data messages waiting on the input channels of `worker`.
    pub fn queued(&self, worker: &OperatorId) -> Result<usize, EngineError> {
        let w = self.worker_index(worker)?;
        Ok(self.in_channels[w].iter().map(|&c| self.chans[c].data).sum())
    }

    pub fn log_len(&self, worker: &OperatorId) -> Result<usize, EngineError> {
        Ok(self.workers[self.worker_index(worker)?].log.len())
    }

    pub fn active_request(&self) -> Option<u64> {
        self.controller.active_request()
    }

    /// Artifact of checkpoint `id`, if it completed.
    pub fn checkpoint_artifact(&self, id: u64) -> Option<CheckpointArtifact> {
        self.controller.checkpoints.get(id as usize).and_then(CheckpointArtifact::from_report)
    }

    /// Latest completed checkpoint.
    pub fn latest_checkpoint(&self) -> Option<CheckpointArtifact> {
        self.controller.checkpoints.iter().rev().find_map(CheckpointArtifact::from_report)
    }

    fn push(&mut self, t: u64, kind: EvKind) {
        let tie = self.rng.gen();
        self.ev_seq += 1;
        self.heap.push(Reverse(Ev { t, tie, seq: self.ev_seq, kind }));
    }

    fn sample(&mut self, range: (u64, u64)) -> u64 {
        if range.1 <= range.0 {
            range.0
        } else {
            self.rng.gen_range(range.0..=range.1)
        }
    }

    fn schedule_wake(&mut self, w: usize, t: u64) {
        if self.wake_at[w] == Some(t) {
            return;
        }
        self.wake_at[w] = Some(t);
        self.push(t, EvKind::Wake(w));
    }

    /// Runs until quiescence, the configured stop time, or a halt.
    pub fn run(&mut self) -> Result<(), EngineError> {
        self.run_until(u64::MAX)?;
        if !self.halted && self.heap.is_empty() && self.cfg.until_us.is_none() {
            let stuck = self.chans.iter().any(|c| !c.queue.is_empty()) || self.pending.iter().any(|p| !p.is_empty());
            if stuck {
                let blocked = self.acts.iter().filter(|a| **a == Act::Blocked).count();
                return Err(EngineError::Deadlock { vtime_us: self.env.now, blocked });
            }
        }
        Ok(())
    }

    /// Processes every event scheduled at or before `t`.
    pub fn run_until(&mut self, t: u64) -> Result<(), EngineError> {
        let stop = self.cfg.until_us.map_or(t, |u| u.min(t));
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.t > stop {
                self.heap.push(Reverse(ev));
                if stop < u64::MAX {
                    self.env.now = self.env.now.max(stop);
                }
                break;
            }
            if self.halted {
                break;
            }
            self.env.now = ev.t;
            self.events += 1;
            self.dispatch(ev.kind);
            self.drain_acks();
            if let Some(e) = self.error.take() {
                return Err(e);
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, kind: EvKind) {
        match kind {
            EvKind::Wake(w) => {
                if self.wake_at[w] == Some(self.env.now) {
                    self.wake_at[w] = None;
                }
                self.try_act(w);
            }
            EvKind::Finish(w) => {
                self.acts[w] = Act::Idle;
                if self.flush(w) {
                    self.try_act(w);
                } else {
                    self.acts[w] = Act::Blocked;
                }
            }
            EvKind::Retry(w) => {
                if self.acts[w] == Act::Blocked && self.flush(w) {
                    self.acts[w] = Act::Idle;
                    self.try_act(w);
                }
            }
            EvKind::Control(w, msg) => {
                self.control[w].push_back(msg);
                match self.acts[w] {
                    Act::Idle => self.try_act(w),
                    Act::Blocked => {
                        self.handle_controls(w);
                        if self.flush(w) {
                            self.acts[w] = Act::Idle;
                            self.try_act(w);
                        }
                    }
                    Act::Busy => {}
                }
            }
            EvKind::Ack(ack) => {
                let now = self.env.now;
                let cmds = self.controller.on_ack(now, ack);
                self.exec(cmds);
            }
            EvKind::Timer(timer) => {
                let now = self.env.now;
                let cmds = self.controller.on_timer(now, timer);
                self.exec(cmds);
            }
            EvKind::User(action) => self.user(action),
        }
    }

    fn user(&mut self, action: Action) {
        let now = self.env.now;
        match action {
            Action::Reconfigure { request, scheduler } => {
                let submitted = scheduler
                    .plan(&self.pg, &request)
                    .and_then(|plan| self.controller.submit(now, &request, plan));
                match submitted {
                    Ok((_, cmds)) => self.exec(cmds),
                    Err(e) => self.rejected.push((now, e)),
                }
            }
            Action::Checkpoint(policy) => {
                let (_, cmds) = self.controller.checkpoint(now, policy);
                self.exec(cmds);
            }
            Action::InjectEpoch => {
                let (_, cmds) = self.controller.inject_epoch();
                self.exec(cmds);
            }
            Action::Halt => self.halted = true,
        }
    }

    fn exec(&mut self, cmds: Vec<Command>) {
        for c in cmds {
            match c {
                Command::Send { worker, msg } => self.send_control(worker, msg),
                Command::Timer { at_us, timer } => self.push(at_us, EvKind::Timer(timer)),
            }
        }
    }

    fn send_control(&mut self, w: usize, msg: Control) {
        let lat = self.sample(self.cfg.control_latency_us);
        let at = (self.env.now + lat).max(self.last_ctrl[w]);
        self.last_ctrl[w] = at;
        self.push(at, EvKind::Control(w, msg));
    }

    fn drain_acks(&mut self) {
        for ack in std::mem::take(&mut self.env.acks) {
            let lat = self.sample(self.cfg.control_latency_us);
            let at = self.env.now + lat;
            self.push(at, EvKind::Ack(ack));
        }
    }

    fn handle_controls(&mut self, w: usize) {
        while let Some(c) = self.control[w].pop_front() {
            let outs = self.workers[w].handle_control(c, &mut self.env);
            self.pending[w].extend(outs);
        }
    }

    fn start_busy(&mut self, w: usize, result: Result<Processed, EngineError>) {
        match result {
            Ok(p) => {
                self.pending[w].extend(p.outputs);
                self.acts[w] = Act::Busy;
                let at = self.env.now + p.cost_us;
                self.push(at, EvKind::Finish(w));
            }
            Err(e) => {
                self.error.get_or_insert(e);
            }
        }
    }

    fn try_act(&mut self, w: usize) {
        if self.acts[w] != Act::Idle || self.halted {
            return;
        }
        loop {
            if !self.control[w].is_empty() {
                self.handle_controls(w);
                if !self.flush(w) {
                    self.acts[w] = Act::Blocked;
                    return;
                }
                continue;
            }
            if self.workers[w].is_source {
                if let Some(t) = self.workers[w].next_emit_us() {
                    if t <= self.env.now {
                        let r = self.workers[w].emit_source(&mut self.env);
                        self.start_busy(w, r);
                    } else {
                        self.schedule_wake(w, t);
                    }
                }
                return;
            }

            let now = self.env.now;
            let ready: Vec<usize> = self.in_channels[w]
                .iter()
                .enumerate()
                .filter(|&(p, &c)| {
                    self.workers[w].blocked[p] == 0 && self.chans[c].queue.front().is_some_and(|(at, _)| *at <= now)
                })
                .map(|(p, _)| p)
                .collect();
            if ready.is_empty() {
                return;
            }
            let port = if ready.len() == 1 { ready[0] } else { ready[self.rng.gen_range(0..ready.len())] };
            let c = self.in_channels[w][port];
            let (_, msg) = self.chans[c].queue.pop_front().expect("ready channel");
            debug_assert_eq!(self.chans[c].to_port, port);
            debug_assert_eq!(self.chans[c].to, w);
            if msg.is_data() {
                self.chans[c].data -= 1;
                if self.chans[c].sender_waiting {
                    self.chans[c].sender_waiting = false;
                    let from = self.chans[c].from;
                    self.push(now, EvKind::Retry(from));
                }
            }
            match msg {
                Message::Data(t) => {
                    let r = self.workers[w].process_data(Some(port), t, &mut self.env);
                    self.start_busy(w, r);
                    return;
                }
                Message::End => {
                    let outs = self.workers[w].close_input(port, &mut self.env);
                    self.pending[w].extend(outs);
                }
                marker => {
                    let outs = self.workers[w].handle_marker(port, marker, &mut self.env);
                    self.pending[w].extend(outs);
                }
            }
            if !self.flush(w) {
                self.acts[w] = Act::Blocked;
                return;
            }
        }
    }

    /// Sends pending output in order; false if a full channel blocks it.
    fn flush(&mut self, w: usize) -> bool {
        while let Some((port, msg)) = self.pending[w].front() {
            let c = self.out_channels[w][*port];
            if msg.is_data() && self.chans[c].data >= self.cfg.channel_capacity {
                self.chans[c].sender_waiting = true;
                return false;
            }
            let (_, msg) = self.pending[w].pop_front().expect("front");
            let lat = self.sample(self.cfg.data_latency_us);
            let ch = &mut self.chans[c];
            let at = (self.env.now + lat).max(ch.last_arrival);
            ch.last_arrival = at;
            if msg.is_data() {
                ch.data += 1;
            }
            ch.queue.push_back((at, msg));
            let to = ch.to;
            self.push(at, EvKind::Wake(to));
        }
        true
    }

    pub fn into_outcome(self) -> RunOutcome {
        let mut log = ScheduleLog::new();
        let mut versions = Vec::new();
        let mut crossings = Vec::new();
        let mut metrics = RunMetrics { end_us: self.env.now, events: self.events, ..RunMetrics::default() };
        for w in self.workers {
            metrics.retained_states.insert(w.id.clone(), w.retained_states());
            metrics.final_configs.insert(w.id.clone(), w.active.function.config_id().to_string());
            if let Some(s) = &w.source {
                metrics.ingested += s.next_seq;
            }
            log.insert_worker(w.id.clone(), WorkerLog { operator: w.logical.clone(), events: w.log });
            versions.extend(w.versions);
            crossings.extend(w.crossings);
        }
        metrics.in_flight = self.chans.iter().map(|c| c.data as u64).sum::<u64>()
            + self.pending.iter().flatten().filter(|(_, m)| m.is_data()).count() as u64;
        RunOutcome {
            log,
            versions,
            sink: self.env.sinks,
            requests: self.controller.reports,
            rejected: self.rejected,
            checkpoints: self.controller.checkpoints,
            crossings,
            metrics,
        }
    }
}
