// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Static reconfiguration plans: components, heads and path lengths.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use anyhow::Result;
use reconflow_core::graph::expand_parallel;
use reconflow_core::sched::{fries_mcs, Scheduler};
use reconflow_core::OperatorId;
use serde::Serialize;

use crate::catalog::Workflow;
use crate::request::{self, UpdateSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanComponent {
    pub vertices: BTreeSet<String>,
    pub edges: Vec<(String, String)>,
    pub heads: BTreeSet<String>,
    pub longest_path_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanOutput {
    pub workflow: String,
    pub scheduler: String,
    pub requested: BTreeSet<String>,
    /// Operators the Fries scheduler synchronizes after extension.
    pub synchronized: BTreeSet<String>,
    /// Logical MCS components (Fries only).
    pub components: Vec<PlanComponent>,
    /// Channels of the worker-level dataflow.
    pub channels: usize,
    /// Worker-level channels inside the MCS (Fries only).
    pub mcs_channels: usize,
    pub fcm_targets: BTreeSet<String>,
}

fn names<'a>(ids: impl IntoIterator<Item = &'a OperatorId>) -> BTreeSet<String> {
    ids.into_iter().map(|i| i.to_string()).collect()
}

/// Plans a reconfiguration of `updates` on `wf` without running it.
pub fn plan(wf: &Workflow, updates: &[UpdateSpec], scheduler: Scheduler) -> Result<PlanOutput> {
    let mut wf = wf.clone();
    let req = request::resolve(&mut wf, updates)?;
    let pg = expand_parallel(&wf.graph);
    let worker_plan = scheduler.plan(&pg, &req)?;
    let mut out = PlanOutput {
        workflow: wf.name.clone(),
        scheduler: scheduler.kind().to_string(),
        requested: names(&req.operators()),
        synchronized: BTreeSet::new(),
        components: Vec::new(),
        channels: pg.channel_count(),
        mcs_channels: 0,
        fcm_targets: names(&worker_plan.fcm_targets),
    };
    if let Scheduler::Fries(options) = scheduler {
        let (sync, mcs) = fries_mcs(&wf.graph, &req.operators(), options)?;
        out.synchronized = names(&sync);
        out.components = mcs
            .components
            .iter()
            .map(|c| PlanComponent {
                vertices: names(&c.vertices),
                edges: c.edges.iter().map(|e| (e.from.to_string(), e.to.to_string())).collect(),
                heads: names(&c.heads),
                longest_path_len: c.longest_path_len,
            })
            .collect();
        out.mcs_channels = worker_plan.components.iter().map(|c| c.edges.len()).sum();
    }
    Ok(out)
}

fn set(s: &BTreeSet<String>) -> String {
    format!("{{{}}}", s.iter().cloned().collect::<Vec<_>>().join(","))
}

/// Human-readable plan.
pub fn render(p: &PlanOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "workflow {} scheduler {} reconfigure {}", p.workflow, p.scheduler, set(&p.requested));
    if p.scheduler == "fries" {
        if p.synchronized != p.requested {
            let _ = writeln!(s, "synchronized {}", set(&p.synchronized));
        }
        for (i, c) in p.components.iter().enumerate() {
            let _ = writeln!(
                s,
                "component {}: {} heads {} longest path {}",
                i + 1,
                set(&c.vertices),
                set(&c.heads),
                c.longest_path_len
            );
        }
        let _ = writeln!(s, "channels {} total, {} in MCS", p.channels, p.mcs_channels);
    } else {
        let _ = writeln!(s, "channels {} total", p.channels);
    }
    let _ = writeln!(s, "fcm targets {}", set(&p.fcm_targets));
    s
}
