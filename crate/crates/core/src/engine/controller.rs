// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Controller: executes reconfiguration plans and checkpoints by sending
//! control messages and collecting acknowledgements.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::message::{Ack, Control, EpochMarker, Fcm, RequestHandle, WorkerSnapshot};
use super::worker::VersionCounters;
use crate::error::RequestError;
use crate::graph::OperatorId;
use crate::sched::{ReconfigPlan, ReconfigurationRequest, SchedulerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointPolicy {
    /// Aligned snapshot, oblivious to reconfigurations.
    #[default]
    Plain,
    /// Cancels in-flight checkpoints when a reconfiguration starts and holds
    /// new ones until every FCM target has handled its message.
    ReconfigSafe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum RequestStatus {
    Pending,
    Completed,
    Aborted { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct RequestReport {
    pub id: u64,
    pub kind: SchedulerKind,
    pub submitted_us: u64,
    pub completed_us: Option<u64>,
    pub status: RequestStatus,
    /// Worker -> time its update was applied.
    pub applied: BTreeMap<OperatorId, u64>,
    pub plan: ReconfigPlan,
}

impl RequestReport {
    /// Submission to last acknowledged update.
    pub fn delay_us(&self) -> Option<u64> {
        self.completed_us.map(|c| c - self.submitted_us)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointStatus {
    /// Held back by a running reconfiguration.
    Waiting,
    InProgress,
    Completed,
    Cancelled,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointReport {
    pub id: u64,
    pub policy: CheckpointPolicy,
    pub requested_us: u64,
    pub started_us: Option<u64>,
    pub completed_us: Option<u64>,
    pub status: CheckpointStatus,
    pub snapshots: BTreeMap<OperatorId, WorkerSnapshot>,
}

#[derive(Debug, Clone)]
pub(crate) enum Timer {
    AckTimeout(u64),
}

#[derive(Debug)]
pub(crate) enum Command {
    Send { worker: usize, msg: Control },
    Timer { at_us: u64, timer: Timer },
}

#[derive(Debug)]
enum MvPhase {
    Installing(BTreeSet<usize>),
    Bumping(BTreeSet<usize>),
    Draining,
    Retiring,
}

#[derive(Debug)]
struct Active {
    handle: RequestHandle,
    report: usize,
    targets: Vec<usize>,
    pending: BTreeSet<usize>,
    mv: Option<(u32, MvPhase)>,
}

#[derive(Debug)]
pub(crate) struct Controller {
    ids: Vec<OperatorId>,
    index: HashMap<OperatorId, usize>,
    logical: Vec<OperatorId>,
    sources: Vec<usize>,
    versions: Arc<VersionCounters>,
    ack_timeout_us: u64,
    next_request: u64,
    next_epoch: u64,
    mv_version: u32,
    active: Option<Active>,
    pub reports: Vec<RequestReport>,
    pub checkpoints: Vec<CheckpointReport>,
    /// Request holding checkpoints back, and the FCM targets still to report.
    ckpt_block: Option<(u64, BTreeSet<usize>)>,
}

impl Controller {
    pub(crate) fn new(
        ids: Vec<OperatorId>,
        logical: Vec<OperatorId>,
        sources: Vec<usize>,
        versions: Arc<VersionCounters>,
        ack_timeout_us: u64,
    ) -> Self {
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Controller {
            ids,
            index,
            logical,
            sources,
            versions,
            ack_timeout_us,
            next_request: 0,
            next_epoch: 0,
            mv_version: 0,
            active: None,
            reports: Vec::new(),
            checkpoints: Vec::new(),
            ckpt_block: None,
        }
    }

    pub(crate) fn set_version_base(&mut self, v: u32) {
        self.mv_version = self.mv_version.max(v);
        self.versions.set_current(self.mv_version);
    }

    pub(crate) fn active_request(&self) -> Option<u64> {
        self.active.as_ref().map(|a| a.handle.id())
    }

    fn worker(&self, id: &OperatorId) -> usize {
        self.index[id]
    }

    pub(crate) fn submit(
        &mut self,
        now: u64,
        request: &ReconfigurationRequest,
        plan: ReconfigPlan,
    ) -> Result<(u64, Vec<Command>), RequestError> {
        if let Some(a) = &self.active {
            return Err(RequestError::Busy(a.handle.id()));
        }
        let id = self.next_request;
        self.next_request += 1;
        let handle = RequestHandle::new(id);
        let mut cmds = Vec::new();

        let update_for = |w: &OperatorId, ctl: &Controller| request.updates[&ctl.logical[ctl.worker(w)]].clone();
        let targets: Vec<usize> = plan.reconfig_workers.iter().map(|w| self.worker(w)).collect();

        for c in self.checkpoints.iter_mut() {
            if c.policy == CheckpointPolicy::ReconfigSafe && c.status == CheckpointStatus::InProgress {
                c.status = CheckpointStatus::Cancelled;
            }
        }
        let heads: BTreeSet<usize> = plan.fcm_targets.iter().map(|w| self.worker(w)).collect();
        if plan.kind != SchedulerKind::Epoch {
            self.ckpt_block = Some((id, heads));
        }

        let mut mv = None;
        match plan.kind {
            SchedulerKind::Epoch => {
                let payload = plan.reconfig_workers.iter().map(|w| (w.clone(), update_for(w, self))).collect();
                let marker = Arc::new(EpochMarker { epoch_id: self.bump_epoch(), scope: None, payload, request: Some(handle.clone()) });
                for &s in &self.sources {
                    cmds.push(Command::Send { worker: s, msg: Control::InjectEpoch(marker.clone()) });
                }
            }
            SchedulerKind::NaiveFcm => {
                for w in &plan.reconfig_workers {
                    let fcm = Fcm { request: handle.clone(), update: Some(update_for(w, self)), propagate: None };
                    cmds.push(Command::Send { worker: self.worker(w), msg: Control::Fcm(fcm) });
                }
            }
            SchedulerKind::Fries => {
                for comp in &plan.components {
                    let payload: BTreeMap<_, _> = comp.reconfig.iter().map(|w| (w.clone(), update_for(w, self))).collect();
                    let marker = (comp.vertices.len() > 1).then(|| {
                        Arc::new(EpochMarker {
                            epoch_id: self.bump_epoch(),
                            scope: Some(comp.vertices.clone()),
                            payload: payload.clone(),
                            request: Some(handle.clone()),
                        })
                    });
                    for h in &comp.heads {
                        let fcm = Fcm { request: handle.clone(), update: payload.get(h).cloned(), propagate: marker.clone() };
                        cmds.push(Command::Send { worker: self.worker(h), msg: Control::Fcm(fcm) });
                    }
                }
            }
            SchedulerKind::MultiVersion => {
                self.mv_version += 1;
                let version = self.mv_version;
                for w in &plan.reconfig_workers {
                    let msg = Control::Install { request: handle.clone(), version, update: update_for(w, self) };
                    cmds.push(Command::Send { worker: self.worker(w), msg });
                }
                cmds.push(Command::Timer { at_us: now + self.ack_timeout_us, timer: Timer::AckTimeout(id) });
                mv = Some((version, MvPhase::Installing(targets.iter().copied().collect())));
            }
        }

        self.reports.push(RequestReport {
            id,
            kind: plan.kind,
            submitted_us: now,
            completed_us: None,
            status: RequestStatus::Pending,
            applied: BTreeMap::new(),
            plan,
        });
        self.active = Some(Active {
            handle,
            report: self.reports.len() - 1,
            pending: targets.iter().copied().collect(),
            targets,
            mv,
        });
        Ok((id, cmds))
    }

    fn bump_epoch(&mut self) -> u64 {
        self.next_epoch += 1;
        self.next_epoch
    }

    /// Global epoch marker without a payload.
    pub(crate) fn inject_epoch(&mut self) -> (u64, Vec<Command>) {
        let epoch_id = self.bump_epoch();
        let marker = Arc::new(EpochMarker { epoch_id, scope: None, payload: BTreeMap::new(), request: None });
        let cmds = self
            .sources
            .iter()
            .map(|&s| Command::Send { worker: s, msg: Control::InjectEpoch(marker.clone()) })
            .collect();
        (epoch_id, cmds)
    }

    pub(crate) fn checkpoint(&mut self, now: u64, policy: CheckpointPolicy) -> (u64, Vec<Command>) {
        let id = self.checkpoints.len() as u64;
        self.checkpoints.push(CheckpointReport {
            id,
            policy,
            requested_us: now,
            started_us: None,
            completed_us: None,
            status: CheckpointStatus::Waiting,
            snapshots: BTreeMap::new(),
        });
        let held = policy == CheckpointPolicy::ReconfigSafe && self.ckpt_block.is_some();
        let cmds = if held { Vec::new() } else { self.start_checkpoint(now, id) };
        (id, cmds)
    }

    fn start_checkpoint(&mut self, now: u64, id: u64) -> Vec<Command> {
        let c = &mut self.checkpoints[id as usize];
        c.status = CheckpointStatus::InProgress;
        c.started_us = Some(now);
        self.sources.iter().map(|&s| Command::Send { worker: s, msg: Control::InjectCheckpoint(id) }).collect()
    }

    fn release_checkpoints(&mut self, now: u64) -> Vec<Command> {
        self.ckpt_block = None;
        let waiting: Vec<u64> = self
            .checkpoints
            .iter()
            .filter(|c| c.status == CheckpointStatus::Waiting)
            .map(|c| c.id)
            .collect();
        waiting.into_iter().flat_map(|id| self.start_checkpoint(now, id)).collect()
    }

    pub(crate) fn on_timer(&mut self, now: u64, timer: Timer) -> Vec<Command> {
        match timer {
            Timer::AckTimeout(id) => {
                let installing = self
                    .active
                    .as_ref()
                    .is_some_and(|a| a.handle.id() == id && matches!(a.mv, Some((_, MvPhase::Installing(_)))));
                if installing {
                    self.abort(now, "acknowledgement timeout before version bump".into())
                } else {
                    Vec::new()
                }
            }
        }
    }

    fn abort(&mut self, now: u64, reason: String) -> Vec<Command> {
        let Some(a) = self.active.take() else { return Vec::new() };
        a.handle.abort();
        self.reports[a.report].status = RequestStatus::Aborted { reason };
        let mut cmds = Vec::new();
        if a.mv.is_some() {
            for &w in &a.targets {
                cmds.push(Command::Send { worker: w, msg: Control::Uninstall { request: a.handle.clone() } });
            }
        }
        if self.ckpt_block.as_ref().is_some_and(|(r, _)| *r == a.handle.id()) {
            cmds.extend(self.release_checkpoints(now));
        }
        cmds
    }

    pub(crate) fn on_ack(&mut self, now: u64, ack: Ack) -> Vec<Command> {
        let active_id = self.active_request();
        match ack {
            Ack::Applied { request, worker, at_us } if Some(request) == active_id => {
                let a = self.active.as_mut().expect("active");
                self.reports[a.report].applied.insert(self.ids[worker].clone(), at_us);
                a.pending.remove(&worker);
                if a.pending.is_empty() {
                    let a = self.active.take().expect("active");
                    let r = &mut self.reports[a.report];
                    r.completed_us = Some(now);
                    r.status = RequestStatus::Completed;
                    if self.ckpt_block.as_ref().is_some_and(|(r, _)| *r == request) {
                        return self.release_checkpoints(now);
                    }
                }
                Vec::new()
            }
            Ack::FcmHandled { request, worker } => {
                let is_mv = self.active.as_ref().is_some_and(|a| a.mv.is_some());
                let mut release = false;
                if let Some((r, heads)) = self.ckpt_block.as_mut() {
                    if *r == request {
                        heads.remove(&worker);
                        release = heads.is_empty() && !is_mv;
                    }
                }
                if release {
                    self.release_checkpoints(now)
                } else {
                    Vec::new()
                }
            }
            Ack::TransformFailed { request, worker, reason } if Some(request) == active_id => {
                let reason = format!("state transform failed at `{}`: {reason}", self.ids[worker]);
                self.abort(now, reason)
            }
            Ack::Installed { request, worker } if Some(request) == active_id => {
                let a = self.active.as_mut().expect("active");
                let mut cmds = Vec::new();
                if let Some((version, MvPhase::Installing(pending))) = a.mv.as_mut() {
                    pending.remove(&worker);
                    if pending.is_empty() {
                        let version = *version;
                        self.versions.set_current(version);
                        a.mv = Some((version, MvPhase::Bumping(self.sources.iter().copied().collect())));
                        for &s in &self.sources {
                            cmds.push(Command::Send { worker: s, msg: Control::Bump { request: a.handle.clone(), version } });
                        }
                    }
                }
                cmds
            }
            Ack::Bumped { request, worker } if Some(request) == active_id => {
                let a = self.active.as_mut().expect("active");
                if let Some((version, MvPhase::Bumping(pending))) = a.mv.as_mut() {
                    pending.remove(&worker);
                    if pending.is_empty() {
                        a.mv = Some((*version, MvPhase::Draining));
                        return self.try_retire();
                    }
                }
                Vec::new()
            }
            Ack::VersionDrained => self.try_retire(),
            Ack::CheckpointDeclined { checkpoint } => {
                let c = &mut self.checkpoints[checkpoint as usize];
                if c.status == CheckpointStatus::InProgress {
                    c.status = CheckpointStatus::Cancelled;
                }
                Vec::new()
            }
            Ack::Snapshot { checkpoint, snapshot } => {
                let total = self.ids.len();
                let c = &mut self.checkpoints[checkpoint as usize];
                if c.status == CheckpointStatus::InProgress {
                    c.snapshots.insert(snapshot.worker.clone(), *snapshot);
                    if c.snapshots.len() == total {
                        c.status = CheckpointStatus::Completed;
                        c.completed_us = Some(now);
                    }
                }
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn try_retire(&mut self) -> Vec<Command> {
        let Some(a) = self.active.as_mut() else { return Vec::new() };
        let Some((version, MvPhase::Draining)) = a.mv else { return Vec::new() };
        if self.versions.in_flight_below(version) != 0 {
            return Vec::new();
        }
        a.mv = Some((version, MvPhase::Retiring));
        a.targets
            .iter()
            .map(|&w| Command::Send { worker: w, msg: Control::Retire { request: a.handle.clone() } })
            .collect()
    }
}
