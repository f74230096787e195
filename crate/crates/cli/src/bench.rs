// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Delay sweeps and channel counts.

use std::path::Path;

use anyhow::{Context, Result};
use reconflow_core::sched::{FriesOptions, Scheduler};
use serde::Serialize;

use crate::catalog::{self, CatalogOptions};
use crate::experiment::{run_experiment, ExperimentSpec, RunMode, Summary};
use crate::plan;
use crate::request;
use crate::scenarios;

pub const RATES: &[f64] = &[500.0, 1000.0, 1500.0, 2000.0, 2500.0];
pub const QUEUES: &[usize] = &[10, 20, 30, 40, 50];
pub const W2_WORKERS: &[u32] = &[1, 4, 12, 20, 40];

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub sweep: String,
    pub param: f64,
    pub scheduler: String,
    pub delay_ms: Summary,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub reps: u32,
    pub seed: u64,
    pub mode: RunMode,
}

fn delay(spec: ExperimentSpec) -> Result<Summary> {
    let r = run_experiment(&spec)?;
    r.delay_ms.first().copied().context("reconfiguration did not complete")
}

/// W1 delay as the ingestion rate grows, at queue length 10.
pub fn rate_sweep(rates: &[f64], schedulers: &[&str], o: SweepOptions) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &rate in rates {
        for &s in schedulers {
            let spec = ExperimentSpec { mode: o.mode, ..scenarios::w1_delay(s, rate, 10, o.reps, o.seed) };
            rows.push(SweepRow { sweep: "rate".into(), param: rate, scheduler: s.into(), delay_ms: delay(spec)? });
        }
    }
    Ok(rows)
}

/// W1 delay as the inference queue (and so the per-tuple cost) grows, at
/// 1,000 tuples/s.
pub fn cost_sweep(queues: &[usize], schedulers: &[&str], o: SweepOptions) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &q in queues {
        for &s in schedulers {
            let spec = ExperimentSpec { mode: o.mode, ..scenarios::w1_delay(s, 1000.0, q, o.reps, o.seed) };
            rows.push(SweepRow { sweep: "queue".into(), param: q as f64, scheduler: s.into(), delay_ms: delay(spec)? });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChannelRow {
    pub workers: u32,
    pub channels: usize,
    /// Channels inside the MCS of a {J1, J4} reconfiguration.
    pub mcs_channels: usize,
}

/// W2 channel counts as every operator but the sink scales out.
pub fn w2_channels(workers: &[u32]) -> Result<Vec<ChannelRow>> {
    workers
        .iter()
        .map(|&w| {
            let wf = catalog::workflow("w2", &CatalogOptions { workers: w, ..CatalogOptions::default() })?;
            let ups = request::touch(&wf, &["J1".into(), "J4".into()], "n");
            let p = plan::plan(&wf, &ups, Scheduler::Fries(FriesOptions::basic()))?;
            Ok(ChannelRow { workers: w, channels: p.channels, mcs_channels: p.mcs_channels })
        })
        .collect()
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["sweep", "param", "scheduler", "n", "mean_delay_ms", "ci95_ms"])?;
    for r in rows {
        w.write_record([
            r.sweep.clone(),
            r.param.to_string(),
            r.scheduler.clone(),
            r.delay_ms.n.to_string(),
            format!("{:.3}", r.delay_ms.mean),
            format!("{:.3}", r.delay_ms.ci95),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_channel_csv(rows: &[ChannelRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["workers", "channels", "mcs_channels"])?;
    for r in rows {
        w.write_record([r.workers.to_string(), r.channels.to_string(), r.mcs_channels.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
