// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Reconfiguration schedulers.
//!
//! Planning is pure: each scheduler turns a request into a [`ReconfigPlan`]
//! over the worker-level graph. The engine's controller executes plans.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::FunctionUpdate;
use crate::error::RequestError;
use crate::graph::{extend_reconfig_set, find_mcs, one_to_many_ancestors, DataflowGraph, Edge, Mcs, OperatorId, ParallelGraph};

/// Function updates keyed by logical operator.
#[derive(Debug, Clone, Default)]
pub struct ReconfigurationRequest {
    pub updates: BTreeMap<OperatorId, FunctionUpdate>,
}

impl ReconfigurationRequest {
    pub fn new() -> Self {
        ReconfigurationRequest::default()
    }

    pub fn with(mut self, op: impl Into<OperatorId>, update: FunctionUpdate) -> Self {
        self.updates.insert(op.into(), update);
        self
    }

    pub fn operators(&self) -> BTreeSet<OperatorId> {
        self.updates.keys().cloned().collect()
    }

    pub fn validate(&self, graph: &DataflowGraph) -> Result<(), RequestError> {
        if self.updates.is_empty() {
            return Err(RequestError::Empty);
        }
        match self.updates.keys().find(|op| !graph.contains(op)) {
            Some(op) => Err(RequestError::UnknownOperator(op.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "epoch")]
    Epoch,
    #[serde(rename = "naive")]
    NaiveFcm,
    #[serde(rename = "multiversion")]
    MultiVersion,
    #[serde(rename = "fries")]
    Fries,
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchedulerKind::Epoch => "epoch",
            SchedulerKind::NaiveFcm => "naive",
            SchedulerKind::MultiVersion => "multiversion",
            SchedulerKind::Fries => "fries",
        })
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epoch" => Ok(SchedulerKind::Epoch),
            "naive" => Ok(SchedulerKind::NaiveFcm),
            "multiversion" | "multi-version" => Ok(SchedulerKind::MultiVersion),
            "fries" => Ok(SchedulerKind::Fries),
            other => Err(format!("unknown scheduler `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FriesOptions {
    /// Add earliest one-to-many ancestors to the synchronized set.
    pub extended: bool,
    /// Drop ancestors covered by the pruning rules; needs `extended`.
    pub pruning: bool,
    /// Run the basic scheduler even where it is unsafe. Negative-control
    /// tests only.
    #[serde(skip)]
    pub skip_guard: bool,
}

impl FriesOptions {
    pub fn basic() -> Self {
        FriesOptions::default()
    }

    pub fn extended(pruning: bool) -> Self {
        FriesOptions { extended: true, pruning, skip_guard: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    Epoch,
    NaiveFcm,
    MultiVersion,
    Fries(FriesOptions),
}

impl Scheduler {
    pub fn kind(&self) -> SchedulerKind {
        match self {
            Scheduler::Epoch => SchedulerKind::Epoch,
            Scheduler::NaiveFcm => SchedulerKind::NaiveFcm,
            Scheduler::MultiVersion => SchedulerKind::MultiVersion,
            Scheduler::Fries(_) => SchedulerKind::Fries,
        }
    }

    pub fn from_kind(kind: SchedulerKind, options: FriesOptions) -> Self {
        match kind {
            SchedulerKind::Epoch => Scheduler::Epoch,
            SchedulerKind::NaiveFcm => Scheduler::NaiveFcm,
            SchedulerKind::MultiVersion => Scheduler::MultiVersion,
            SchedulerKind::Fries => Scheduler::Fries(options),
        }
    }

    pub fn plan(&self, pg: &ParallelGraph, request: &ReconfigurationRequest) -> Result<ReconfigPlan, RequestError> {
        match self {
            Scheduler::Epoch => schedule_epoch(pg, request),
            Scheduler::NaiveFcm => schedule_naive_fcm(pg, request),
            Scheduler::MultiVersion => schedule_multi_version(pg, request),
            Scheduler::Fries(o) => schedule_fries(pg, request, *o),
        }
    }
}

/// One synchronization unit of a Fries plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentPlan {
    /// Marker scope.
    pub vertices: BTreeSet<OperatorId>,
    pub edges: BTreeSet<Edge>,
    /// FCM targets.
    pub heads: BTreeSet<OperatorId>,
    /// Reconfiguration workers inside the component.
    pub reconfig: BTreeSet<OperatorId>,
    pub longest_path_len: usize,
}

/// Controller actions for one request, over worker ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconfigPlan {
    pub kind: SchedulerKind,
    pub reconfig_workers: BTreeSet<OperatorId>,
    /// Workers that receive an FCM (empty for the epoch scheduler).
    pub fcm_targets: BTreeSet<OperatorId>,
    /// Source workers: marker injection points (epoch) or version-bump
    /// targets (multi-version).
    pub sources: BTreeSet<OperatorId>,
    pub components: Vec<ComponentPlan>,
    /// Synchronized set the MCS was built from (Fries only).
    pub synchronized: BTreeSet<OperatorId>,
}

fn base_plan(kind: SchedulerKind, pg: &ParallelGraph, request: &ReconfigurationRequest) -> Result<ReconfigPlan, RequestError> {
    request.validate(pg.logical())?;
    let g = pg.graph();
    Ok(ReconfigPlan {
        kind,
        reconfig_workers: pg.expand_ops(&request.operators())?,
        fcm_targets: BTreeSet::new(),
        sources: g.sources().map(|v| g.id(v).clone()).collect(),
        components: Vec::new(),
        synchronized: BTreeSet::new(),
    })
}

/// Epoch barrier: one marker per source carries the updates; each worker
/// applies on alignment.
pub fn schedule_epoch(pg: &ParallelGraph, request: &ReconfigurationRequest) -> Result<ReconfigPlan, RequestError> {
    base_plan(SchedulerKind::Epoch, pg, request)
}

/// One uncoordinated FCM per reconfiguration worker.
pub fn schedule_naive_fcm(pg: &ParallelGraph, request: &ReconfigurationRequest) -> Result<ReconfigPlan, RequestError> {
    let mut plan = base_plan(SchedulerKind::NaiveFcm, pg, request)?;
    plan.fcm_targets = plan.reconfig_workers.clone();
    Ok(plan)
}

/// Install both configurations, then bump the source version tag.
pub fn schedule_multi_version(pg: &ParallelGraph, request: &ReconfigurationRequest) -> Result<ReconfigPlan, RequestError> {
    let mut plan = base_plan(SchedulerKind::MultiVersion, pg, request)?;
    plan.fcm_targets = plan.reconfig_workers.clone();
    Ok(plan)
}

pub fn schedule_fries(
    pg: &ParallelGraph,
    request: &ReconfigurationRequest,
    options: FriesOptions,
) -> Result<ReconfigPlan, RequestError> {
    let mut plan = base_plan(SchedulerKind::Fries, pg, request)?;
    let (synchronized, mcs) = fries_mcs(pg.graph(), &plan.reconfig_workers, options)?;
    plan.components = mcs
        .components
        .iter()
        .map(|c| ComponentPlan {
            vertices: c.vertices.clone(),
            edges: c.edges.clone(),
            heads: c.heads.clone(),
            reconfig: c.vertices.intersection(&plan.reconfig_workers).cloned().collect(),
            longest_path_len: c.longest_path_len,
        })
        .collect();
    plan.fcm_targets = plan.components.iter().flat_map(|c| c.heads.iter().cloned()).collect();
    plan.synchronized = synchronized;
    Ok(plan)
}

/// Synchronized set and MCS for a Fries reconfiguration of `reconfig` on
/// `graph`. Pruning only applies together with `extended`.
pub fn fries_mcs(
    graph: &DataflowGraph,
    reconfig: &BTreeSet<OperatorId>,
    options: FriesOptions,
) -> Result<(BTreeSet<OperatorId>, Mcs), RequestError> {
    let m = if options.extended {
        extend_reconfig_set(graph, reconfig, options.pruning)?
    } else {
        if !options.skip_guard {
            for op in reconfig {
                if !one_to_many_ancestors(graph, op)?.is_empty() {
                    return Err(RequestError::NeedsExtended(op.clone()));
                }
            }
        }
        reconfig.clone()
    };
    let mcs = find_mcs(graph, &m)?;
    Ok((m, mcs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::OperatorFunction;
    use crate::graph::{expand_parallel, ids, OperatorMeta};

    fn upd() -> FunctionUpdate {
        FunctionUpdate::new(OperatorFunction::passthrough("new"))
    }

    fn fig9() -> ParallelGraph {
        let mut b = DataflowGraph::builder();
        for v in ["A", "B", "C", "D", "E", "F", "G", "H"] {
            b.add_operator(v, OperatorMeta::one_to_one());
        }
        for (x, y) in [("A", "C"), ("B", "C"), ("B", "G"), ("C", "D"), ("C", "E"), ("D", "F"), ("E", "F"), ("F", "H"), ("G", "H")] {
            b.add_edge(x, y);
        }
        expand_parallel(&b.build().unwrap())
    }

    #[test]
    fn fries_targets_component_heads() {
        let pg = fig9();
        let req = ReconfigurationRequest::new().with("C", upd()).with("F", upd()).with("G", upd());
        let plan = schedule_fries(&pg, &req, FriesOptions::basic()).unwrap();
        assert_eq!(plan.fcm_targets, ids(["C#0", "G#0"]));
        assert_eq!(plan.components.len(), 2);
        assert_eq!(plan.components[0].reconfig, ids(["C#0", "F#0"]));
        for c in &plan.components {
            assert!(c.edges.iter().all(|e| c.vertices.contains(&e.from) && c.vertices.contains(&e.to)));
        }
    }

    #[test]
    fn request_validation() {
        let pg = fig9();
        assert!(matches!(schedule_epoch(&pg, &ReconfigurationRequest::new()), Err(RequestError::Empty)));
        let bad = ReconfigurationRequest::new().with("Z", upd());
        assert!(matches!(schedule_naive_fcm(&pg, &bad), Err(RequestError::UnknownOperator(_))));
    }

    #[test]
    fn basic_fries_refuses_one_to_many_ancestors() {
        let g = DataflowGraph::builder()
            .operator("S", OperatorMeta::one_to_many())
            .operator("T", OperatorMeta::one_to_one())
            .edge("S", "T")
            .build()
            .unwrap();
        let pg = expand_parallel(&g);
        let req = ReconfigurationRequest::new().with("T", upd());
        assert!(matches!(schedule_fries(&pg, &req, FriesOptions::basic()), Err(RequestError::NeedsExtended(_))));
        let forced = FriesOptions { skip_guard: true, ..FriesOptions::basic() };
        assert!(schedule_fries(&pg, &req, forced).is_ok());
        let plan = schedule_fries(&pg, &req, FriesOptions::extended(false)).unwrap();
        assert_eq!(plan.fcm_targets, ids(["S#0"]));
    }

    #[test]
    fn scheduler_names_parse() {
        for k in [SchedulerKind::Epoch, SchedulerKind::NaiveFcm, SchedulerKind::MultiVersion, SchedulerKind::Fries] {
            assert_eq!(k.to_string().parse::<SchedulerKind>().unwrap(), k);
        }
    }
}
