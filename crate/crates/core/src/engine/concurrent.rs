// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Wall-clock driver: one OS thread per worker.
//!
//! Data channels are bounded crossbeam channels. Each worker also owns an
//! unbounded control channel and selects on it together with its unblocked
//! inputs, so control messages never wait behind queued data. The calling
//! thread acts as the controller.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Select, Sender, TrySendError};

use super::controller::{Command, Controller, Timer};
use super::function::OperatorSetup;
use super::log::{ScheduleLog, WorkerLog};
use super::message::{Ack, Control, Message, SinkRecord};
use super::worker::{build_topology, Env, VersionCounters, Worker};
use super::{Action, RunConfig, RunMetrics, RunOutcome};
use crate::error::EngineError;
use crate::graph::{OperatorId, ParallelGraph};

#[derive(Debug, Clone)]
pub struct ThreadedConfig {
    /// Multiplier applied to simulated processing cost before sleeping.
    pub time_scale: f64,
}

impl Default for ThreadedConfig {
    fn default() -> Self {
        ThreadedConfig { time_scale: 1.0 }
    }
}

struct ThreadEnv {
    start: Instant,
    tuple_ids: Arc<AtomicU64>,
    versions: Arc<VersionCounters>,
    acks: Sender<Ack>,
    sinks: Vec<SinkRecord>,
}

impl Env for ThreadEnv {
    fn now_us(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }

    fn next_tuple_id(&mut self) -> u64 {
        self.tuple_ids.fetch_add(1, Ordering::Relaxed) + 1
    }

    fn next_event_index(&mut self) -> Option<u64> {
        None
    }

    fn ack(&mut self, ack: Ack) {
        let _ = self.acks.send(ack);
    }

    fn sink(&mut self, rec: SinkRecord) {
        self.sinks.push(rec);
    }

    fn versions(&self) -> &VersionCounters {
        &self.versions
    }
}

struct WorkerThread {
    worker: Worker,
    inputs: Vec<Receiver<Message>>,
    outputs: Vec<Sender<Message>>,
    ctrl: Receiver<Control>,
    ctrl_open: bool,
    env: ThreadEnv,
    pending: VecDeque<(usize, Message)>,
    time_scale: f64,
}

impl WorkerThread {
    fn control(&mut self, c: Control) {
        let outs = self.worker.handle_control(c, &mut self.env);
        self.pending.extend(outs);
    }

    fn drain_control(&mut self) {
        while let Ok(c) = self.ctrl.try_recv() {
            self.control(c);
        }
    }

    /// Sends pending output. While an output is full the worker keeps
    /// taking control messages; their output queues behind.
    fn flush(&mut self) {
        while let Some((p, msg)) = self.pending.pop_front() {
            let mut msg = match self.outputs[p].try_send(msg) {
                Ok(()) | Err(TrySendError::Disconnected(_)) => continue,
                Err(TrySendError::Full(m)) => m,
            };
            loop {
                if !self.ctrl_open {
                    let _ = self.outputs[p].send(msg);
                    break;
                }
                let mut sel = Select::new();
                let s = sel.send(&self.outputs[p]);
                sel.recv(&self.ctrl);
                let op = sel.select();
                if op.index() == s {
                    let _ = op.send(&self.outputs[p], msg);
                    break;
                }
                match op.recv(&self.ctrl) {
                    Ok(c) => self.control(c),
                    Err(_) => self.ctrl_open = false,
                }
                msg = match self.outputs[p].try_send(msg) {
                    Ok(()) | Err(TrySendError::Disconnected(_)) => break,
                    Err(TrySendError::Full(m)) => m,
                };
            }
        }
    }

    fn work(&mut self, cost_us: u64) {
        let d = (cost_us as f64 * self.time_scale) as u64;
        if d > 0 {
            thread::sleep(Duration::from_micros(d));
        }
    }

    fn finish(&mut self) {
        self.flush();
        for o in &self.outputs {
            let _ = o.send(Message::End);
        }
    }

    fn run(&mut self) -> Result<(), EngineError> {
        loop {
            self.drain_control();
            self.flush();
            if self.worker.is_source {
                let Some(at) = self.worker.next_emit_us() else {
                    self.finish();
                    return Ok(());
                };
                let now = self.env.now_us();
                if at <= now {
                    let p = self.worker.emit_source(&mut self.env)?;
                    self.pending.extend(p.outputs);
                    self.work(p.cost_us);
                } else if self.ctrl_open {
                    match self.ctrl.recv_timeout(Duration::from_micros(at - now)) {
                        Ok(c) => self.control(c),
                        Err(crossbeam_channel::RecvTimeoutError::Timeout) => {}
                        Err(_) => self.ctrl_open = false,
                    }
                } else {
                    thread::sleep(Duration::from_micros(at - now));
                }
                continue;
            }

            if self.worker.all_inputs_closed() {
                self.finish();
                return Ok(());
            }
            let ports: Vec<usize> = (0..self.inputs.len())
                .filter(|&p| !self.worker.ended[p] && self.worker.blocked[p] == 0)
                .collect();
            let mut sel = Select::new();
            let ctrl_idx = self.ctrl_open.then(|| sel.recv(&self.ctrl));
            for &p in &ports {
                sel.recv(&self.inputs[p]);
            }
            if ports.is_empty() && ctrl_idx.is_none() {
                // Every open input is held by an alignment that can no
                // longer complete.
                return Err(EngineError::WorkerTerminated(self.worker.id.clone()));
            }
            let op = sel.select();
            if Some(op.index()) == ctrl_idx {
                match op.recv(&self.ctrl) {
                    Ok(c) => self.control(c),
                    Err(_) => self.ctrl_open = false,
                }
                continue;
            }
            let port = ports[op.index() - usize::from(ctrl_idx.is_some())];
            match op.recv(&self.inputs[port]) {
                Ok(Message::Data(t)) => {
                    let p = self.worker.process_data(Some(port), t, &mut self.env)?;
                    self.pending.extend(p.outputs);
                    self.work(p.cost_us);
                }
                Ok(Message::End) | Err(_) => {
                    let outs = self.worker.close_input(port, &mut self.env);
                    self.pending.extend(outs);
                }
                Ok(marker) => {
                    let outs = self.worker.handle_marker(port, marker, &mut self.env);
                    self.pending.extend(outs);
                }
            }
        }
    }
}

/// Runs a dataflow on threads. See [`super::run`].
pub struct ThreadedEngine;

impl ThreadedEngine {
    pub fn run(
        pg: &ParallelGraph,
        setups: &BTreeMap<OperatorId, OperatorSetup>,
        config: RunConfig,
        threaded: ThreadedConfig,
        mut actions: Vec<(u64, Action)>,
    ) -> Result<RunOutcome, EngineError> {
        let topo = build_topology(pg, setups, &config.sources, &config.cost_factors)?;
        let n = topo.workers.len();
        let versions = Arc::new(VersionCounters::new());
        let tuple_ids = Arc::new(AtomicU64::new(0));
        let g = pg.graph();
        let mut controller = Controller::new(
            g.ids().to_vec(),
            (0..n).map(|v| pg.logical_of(v).clone()).collect(),
            g.sources().collect(),
            versions.clone(),
            config.ack_timeout_us,
        );

        let cap = config.channel_capacity.max(1);
        let mut inputs: Vec<Vec<Option<Receiver<Message>>>> =
            topo.in_channels.iter().map(|ins| vec![None; ins.len()]).collect();
        let mut outputs: Vec<Vec<Option<Sender<Message>>>> =
            topo.out_channels.iter().map(|outs| vec![None; outs.len()]).collect();
        for (c, spec) in topo.channels.iter().enumerate() {
            let (tx, rx) = bounded(cap);
            inputs[spec.to][spec.to_port] = Some(rx);
            let port = topo.out_channels[spec.from].iter().position(|&x| x == c).expect("channel port");
            outputs[spec.from][port] = Some(tx);
        }

        let (ack_tx, ack_rx) = unbounded::<Ack>();
        let (done_tx, done_rx) = unbounded::<usize>();
        let start = Instant::now();
        let mut ctrl_tx = Vec::with_capacity(n);
        let mut handles = Vec::with_capacity(n);
        for (w, worker) in topo.workers.into_iter().enumerate() {
            let (ctx, crx) = unbounded();
            ctrl_tx.push(ctx);
            let id = worker.id.clone();
            let mut wt = WorkerThread {
                worker,
                inputs: inputs[w].drain(..).map(|r| r.expect("input wired")).collect(),
                outputs: outputs[w].drain(..).map(|s| s.expect("output wired")).collect(),
                ctrl: crx,
                ctrl_open: true,
                env: ThreadEnv {
                    start,
                    tuple_ids: tuple_ids.clone(),
                    versions: versions.clone(),
                    acks: ack_tx.clone(),
                    sinks: Vec::new(),
                },
                pending: VecDeque::new(),
                time_scale: threaded.time_scale,
            };
            let done = done_tx.clone();
            let h = thread::Builder::new()
                .name(id.to_string())
                .spawn(move || {
                    let r = wt.run();
                    // Dropping the channels lets neighbours observe the exit.
                    wt.inputs.clear();
                    wt.outputs.clear();
                    let _ = done.send(w);
                    (wt.worker, wt.env.sinks, r)
                })
                .expect("spawn worker thread");
            handles.push((id, h));
        }
        drop(ack_tx);
        drop(done_tx);

        actions.sort_by_key(|(t, _)| *t);
        let mut actions: VecDeque<_> = actions.into();
        let mut timers: Vec<(u64, Timer)> = Vec::new();
        let mut rejected = Vec::new();
        let mut finished = 0;
        let mut stopped = false;
        let sources: Vec<usize> = g.sources().collect();
        let now_us = || start.elapsed().as_micros() as u64;

        let send = |cmds: Vec<Command>, timers: &mut Vec<(u64, Timer)>| {
            for c in cmds {
                match c {
                    Command::Send { worker, msg } => {
                        let _ = ctrl_tx[worker].send(msg);
                    }
                    Command::Timer { at_us, timer } => timers.push((at_us, timer)),
                }
            }
        };

        while finished < n {
            let now = now_us();
            if !stopped && config.until_us.is_some_and(|u| now >= u) {
                stopped = true;
                for &s in &sources {
                    let _ = ctrl_tx[s].send(Control::Stop);
                }
            }
            while actions.front().is_some_and(|(t, _)| *t <= now) {
                let (_, a) = actions.pop_front().expect("front");
                match a {
                    Action::Reconfigure { request, scheduler } => {
                        match scheduler.plan(pg, &request).and_then(|plan| controller.submit(now, &request, plan)) {
                            Ok((_, cmds)) => send(cmds, &mut timers),
                            Err(e) => rejected.push((now, e)),
                        }
                    }
                    Action::Checkpoint(policy) => send(controller.checkpoint(now, policy).1, &mut timers),
                    Action::InjectEpoch => send(controller.inject_epoch().1, &mut timers),
                    Action::Halt => {
                        stopped = true;
                        for &s in &sources {
                            let _ = ctrl_tx[s].send(Control::Stop);
                        }
                    }
                }
            }
            let due: Vec<Timer> = {
                let (due, rest): (Vec<_>, Vec<_>) = timers.drain(..).partition(|(t, _)| *t <= now);
                timers = rest;
                due.into_iter().map(|(_, t)| t).collect()
            };
            for t in due {
                send(controller.on_timer(now, t), &mut timers);
            }

            let next = actions
                .front()
                .map(|(t, _)| *t)
                .into_iter()
                .chain(timers.iter().map(|(t, _)| *t))
                .chain(config.until_us.filter(|_| !stopped))
                .min();
            let wait = next.map_or(Duration::from_millis(50), |t| Duration::from_micros(t.saturating_sub(now)));
            crossbeam_channel::select! {
                recv(ack_rx) -> ack => if let Ok(ack) = ack {
                    send(controller.on_ack(now_us(), ack), &mut timers);
                },
                recv(done_rx) -> d => if d.is_ok() { finished += 1 },
                default(wait) => {}
            }
        }
        let end_us = now_us();
        while let Ok(ack) = ack_rx.try_recv() {
            controller.on_ack(end_us, ack);
        }
        drop(ctrl_tx);

        let mut log = ScheduleLog::new();
        let mut outcome_versions = Vec::new();
        let mut crossings = Vec::new();
        let mut sink = Vec::new();
        let mut metrics = RunMetrics { end_us, ..RunMetrics::default() };
        let mut error = None;
        for (id, h) in handles {
            let (w, sinks, r) = h.join().map_err(|_| EngineError::WorkerPanicked(id))?;
            if let Err(e) = r {
                error.get_or_insert(e);
            }
            metrics.events += w.log.len() as u64;
            metrics.retained_states.insert(w.id.clone(), w.retained_states());
            metrics.final_configs.insert(w.id.clone(), w.active.function.config_id().to_string());
            if let Some(s) = &w.source {
                metrics.ingested += s.next_seq;
            }
            log.insert_worker(w.id.clone(), WorkerLog { operator: w.logical.clone(), events: w.log });
            outcome_versions.extend(w.versions);
            crossings.extend(w.crossings);
            sink.extend(sinks);
        }
        if let Some(e) = error {
            return Err(e);
        }
        sink.sort_by_key(|r| (r.received_us, r.txn_id));
        Ok(RunOutcome {
            log,
            versions: outcome_versions,
            sink,
            requests: controller.reports,
            rejected,
            checkpoints: controller.checkpoints,
            crossings,
            metrics,
        })
    }
}
