// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Ready-made experiment specs for the delay, invalid-tuple and checkpoint
//! experiments.

use std::collections::BTreeMap;

use anyhow::{Context, Result};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use reconflow_core::engine::{Action, CheckpointArtifact, CheckpointPolicy, CheckpointStatus, RunConfig, Simulation};
use reconflow_core::graph::expand_parallel;
use reconflow_core::sched::{FriesOptions, Scheduler};
use reconflow_core::OperatorId;
use serde::Serialize;

use crate::catalog::{self, CatalogOptions};
use crate::experiment::{ExperimentSpec, TimedUpdates};
use crate::request::{self, UpdateSpec};

/// Workers of FD in the delay experiments.
pub const W1_WORKERS: u32 = 4;
pub const W1_RECONFIG_US: u64 = 10_000_000;

/// W1 with an overloaded FD: reconfigure FD at 10 s while sources run at
/// `rate`, with `queue` values per key in the inference state.
pub fn w1_delay(scheduler: &str, rate: f64, queue: usize, reps: u32, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        workflow: "w1".into(),
        workers: W1_WORKERS,
        inference_queue: queue,
        scheduler: scheduler.into(),
        reconfigurations: vec![TimedUpdates { at_us: W1_RECONFIG_US, touch: vec!["FD".into()], ..Default::default() }],
        rate: vec![(0, rate)],
        stop_sources_us: Some(W1_RECONFIG_US + 200_000),
        // Large enough that sources never block, so the backlog reflects
        // the offered rate.
        channel_capacity: 1 << 20,
        seed,
        reps,
        ..ExperimentSpec::default()
    }
}

/// W3 with an overloaded J6: reconfigure `ops` at 5 s.
pub fn w3_delay(scheduler: &str, ops: &[&str], reps: u32, seed: u64) -> ExperimentSpec {
    let rates = [("WS", 300.0), ("CS", 1100.0), ("SS", 200.0)];
    ExperimentSpec {
        workflow: "w3".into(),
        scheduler: scheduler.into(),
        reconfigurations: vec![TimedUpdates {
            at_us: 5_000_000,
            touch: ops.iter().map(|o| o.to_string()).collect(),
            ..Default::default()
        }],
        source_rates: rates.iter().map(|&(s, r)| (s.to_string(), vec![(0, r)])).collect(),
        stop_sources_us: Some(6_000_000),
        costs_ms: [("J5".to_string(), 1.0), ("J6".to_string(), 1.0)].into(),
        channel_capacity: 1 << 20,
        seed,
        reps,
        ..ExperimentSpec::default()
    }
}

pub const VERSION_PERIOD_US: u64 = 10_000_000;
pub const VERSION_LAG_US: u64 = 4_000_000;

/// W1 where the source stamps a version that changes every 10 s and FD is
/// updated to match it 4 s later. Tuples FD processes with a stale version
/// are invalid. `scheduler` may be `none`.
pub fn w1_invalid(scheduler: &str, seed: u64) -> ExperimentSpec {
    let until = 60_000_000;
    let reconfigurations = (1..until / VERSION_PERIOD_US)
        .map(|v| TimedUpdates {
            at_us: v * VERSION_PERIOD_US + VERSION_LAG_US,
            updates: vec![UpdateSpec::new("FD", &format!("versioned:{v}"))],
            ..Default::default()
        })
        .collect();
    ExperimentSpec {
        workflow: "w1".into(),
        workers: W1_WORKERS,
        scheduler: scheduler.into(),
        reconfigurations,
        rate: vec![(0, 1000.0)],
        functions: [
            ("SRC".to_string(), format!("version_source:{VERSION_PERIOD_US}")),
            ("FD".to_string(), "versioned:0".to_string()),
        ]
        .into(),
        // FD handles about 800 tuples/s; its queues stay short enough that
        // every update lands within the lag.
        costs_ms: [("FD".to_string(), 5.0)].into(),
        channel_capacity: 500,
        until_us: Some(until),
        seed,
        reps: 1,
        window_ms: 1_000,
        ..ExperimentSpec::default()
    }
}

/// Result of one checkpoint racing a reconfiguration.
#[derive(Debug, Clone, Serialize)]
pub struct RaceResult {
    pub seed: u64,
    pub checkpoint_us: u64,
    pub status: String,
    /// Reconfigured workers in the snapshot disagree on old versus new.
    pub mixed: bool,
    /// Reconfigured workers after restoring and running to the end all run
    /// the old or all the new configuration.
    pub restore_consistent: Option<bool>,
}

const RACE_OPS: [&str; 2] = ["C", "G"];
const RACE_RECONFIG_US: u64 = 100_000;

fn is_new(config: &str) -> bool {
    config.ends_with("/new")
}

/// fig9 with C overloaded by A's stream: a Fries reconfiguration of {C, G}
/// at 100 ms and one checkpoint at a seeded time near it. Checkpoint
/// markers reach G quickly through B and C slowly through its backlog.
pub fn checkpoint_race(seed: u64, policy: CheckpointPolicy) -> Result<RaceResult> {
    let mut wf = catalog::workflow("fig9", &CatalogOptions::default())?;
    wf.set_cost_ms(&OperatorId::new("C"), 1.0)?;
    let updates: Vec<UpdateSpec> = RACE_OPS.iter().map(|o| UpdateSpec::new(o, "passthrough/new")).collect();
    let req = request::resolve(&mut wf, &updates)?;
    let pg = expand_parallel(&wf.graph);
    let mut rng = SmallRng::seed_from_u64(seed);
    let checkpoint_us = RACE_RECONFIG_US - 60_000 + rng.gen_range(0..80_000);
    let sources = BTreeMap::from([
        (OperatorId::new("A"), reconflow_core::engine::SourceSpec::count(400, 2000.0)),
        (OperatorId::new("B"), reconflow_core::engine::SourceSpec::count(40, 200.0)),
    ]);
    let cfg = RunConfig { seed, sources, channel_capacity: 1 << 16, ..RunConfig::default() };

    let mut sim = Simulation::new(pg.clone(), &wf.setups, cfg.clone())?;
    let scheduler = Scheduler::Fries(FriesOptions::basic());
    sim.schedule(RACE_RECONFIG_US, Action::Reconfigure { request: req, scheduler });
    sim.schedule(checkpoint_us, Action::Checkpoint(policy));
    sim.run().with_context(|| format!("engine failure (seed {seed})"))?;
    let art = sim.latest_checkpoint();
    let out = sim.into_outcome();
    let report = out.checkpoints.first().context("checkpoint was not recorded")?;
    let status = serde_json::to_value(report.status)?.as_str().unwrap_or_default().to_string();
    let Some(art) = art.filter(|_| report.status == CheckpointStatus::Completed) else {
        return Ok(RaceResult { seed, checkpoint_us, status, mixed: false, restore_consistent: None });
    };
    let mixed = snapshot_mixed(&art);

    // Restore and drain; the reconfigured workers must agree.
    let mut restored = Simulation::restore(pg, &wf.setups, &wf.registry, &art, cfg)?;
    restored.run()?;
    let finals = restored.into_outcome().metrics.final_configs;
    let news: Vec<bool> = RACE_OPS.iter().map(|o| is_new(&finals[&OperatorId::new(format!("{o}#0"))])).collect();
    let restore_consistent = Some(news.iter().all(|&n| n == news[0]));
    Ok(RaceResult { seed, checkpoint_us, status, mixed, restore_consistent })
}

fn snapshot_mixed(art: &CheckpointArtifact) -> bool {
    let news: Vec<bool> =
        RACE_OPS.iter().map(|o| is_new(&art.snapshots[&OperatorId::new(format!("{o}#0"))].config_id)).collect();
    news.iter().any(|&n| n != news[0])
}
