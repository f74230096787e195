// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment specs, repetitions and metrics export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use reconflow_core::engine::{self, Action, CheckpointPolicy, Mode, RunConfig, RunOutcome, SourceSpec};
use reconflow_core::graph::{expand_parallel, ParallelGraph};
use reconflow_core::sched::{FriesOptions, Scheduler, SchedulerKind};
use reconflow_core::OperatorId;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::{self, CatalogOptions, Workflow};
use crate::request::{self, UpdateSpec};

/// Environment variable naming the output directory of `run` and `bench`.
pub const OUT_DIR_ENV: &str = "RECONFLOW_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Deterministic,
    Concurrent,
}

impl From<RunMode> for Mode {
    fn from(m: RunMode) -> Mode {
        match m {
            RunMode::Deterministic => Mode::Deterministic,
            RunMode::Concurrent => Mode::Concurrent,
        }
    }
}

/// One reconfiguration injected at `at_us`. `touch` lists operators whose
/// function is kept but re-installed under a new config id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimedUpdates {
    pub at_us: u64,
    pub updates: Vec<UpdateSpec>,
    pub touch: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub workflow: String,
    pub workers: u32,
    pub inference_queue: usize,
    /// `none` runs without reconfigurations; otherwise a scheduler name.
    pub scheduler: String,
    pub options: FriesOptions,
    pub reconfigurations: Vec<TimedUpdates>,
    /// `(from_us, tuples_per_second)` for every source.
    pub rate: Vec<(u64, f64)>,
    /// Per-source schedules replacing `rate`.
    pub source_rates: BTreeMap<String, Vec<(u64, f64)>>,
    pub stop_sources_us: Option<u64>,
    pub max_tuples: Option<u64>,
    /// Operator -> function name, applied before the run.
    pub functions: BTreeMap<String, String>,
    pub costs_ms: BTreeMap<String, f64>,
    /// Worker (`op#i`) -> cost multiplier.
    pub cost_factors: BTreeMap<String, f64>,
    pub checkpoints: Vec<(u64, CheckpointPolicy)>,
    pub channel_capacity: usize,
    pub until_us: Option<u64>,
    pub seed: u64,
    pub reps: u32,
    pub mode: RunMode,
    /// Latency averaging window.
    pub window_ms: u64,
    /// Run repetitions on a thread pool.
    pub parallel: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            workflow: "w1".into(),
            workers: 1,
            inference_queue: 10,
            scheduler: "fries".into(),
            options: FriesOptions::default(),
            reconfigurations: Vec::new(),
            rate: vec![(0, 1000.0)],
            source_rates: BTreeMap::new(),
            stop_sources_us: None,
            max_tuples: None,
            functions: BTreeMap::new(),
            costs_ms: BTreeMap::new(),
            cost_factors: BTreeMap::new(),
            checkpoints: Vec::new(),
            channel_capacity: 1024,
            until_us: None,
            seed: 0,
            reps: 1,
            mode: RunMode::Deterministic,
            window_ms: 10_000,
            parallel: false,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).context("invalid experiment spec")?;
        spec.validate()?;
        Ok(spec)
    }

    /// `None` for the no-reconfiguration baseline.
    pub fn scheduler(&self) -> Result<Option<Scheduler>> {
        if self.scheduler == "none" {
            return Ok(None);
        }
        let kind: SchedulerKind = self.scheduler.parse().map_err(|e: String| anyhow!(e))?;
        Ok(Some(Scheduler::from_kind(kind, self.options)))
    }

    pub fn validate(&self) -> Result<()> {
        self.scheduler()?;
        if self.reps == 0 {
            bail!("reps must be at least 1");
        }
        if self.window_ms == 0 {
            bail!("window_ms must be positive");
        }
        let rates = self.rate.iter().chain(self.source_rates.values().flatten());
        for &(_, r) in rates {
            if !(r > 0.0 && r.is_finite()) {
                bail!("rates must be positive, got {r}");
            }
        }
        let bounded = self.stop_sources_us.is_some() || self.max_tuples.is_some();
        if self.until_us.is_none() && !bounded {
            bail!("unbounded run: set until_us, stop_sources_us or max_tuples");
        }
        let bound = self.until_us.or(self.stop_sources_us);
        for r in &self.reconfigurations {
            if bound.is_some_and(|b| r.at_us >= b) {
                bail!("reconfiguration at {} us is outside the run", r.at_us);
            }
            if r.updates.is_empty() && r.touch.is_empty() {
                bail!("reconfiguration at {} us has no updates", r.at_us);
            }
        }
        Ok(())
    }

    /// Workflow with overrides applied.
    pub fn workflow(&self) -> Result<Workflow> {
        let opts = CatalogOptions { workers: self.workers, inference_queue: self.inference_queue };
        let mut wf = catalog::workflow(&self.workflow, &opts)?;
        for (op, f) in &self.functions {
            wf.set_function(&OperatorId::new(op), f)?;
        }
        for (op, c) in &self.costs_ms {
            wf.set_cost_ms(&OperatorId::new(op), *c)?;
        }
        for (op, spec) in wf.sources.iter_mut() {
            let schedule = self.source_rates.get(op.as_str()).unwrap_or(&self.rate);
            *spec = SourceSpec {
                rate_schedule: schedule.clone(),
                stop_us: self.stop_sources_us,
                max_tuples: self.max_tuples,
                ..SourceSpec::default()
            };
        }
        for op in self.source_rates.keys() {
            if !wf.sources.contains_key(&OperatorId::new(op)) {
                bail!("`{op}` is not a source of `{}`", wf.name);
            }
        }
        Ok(wf)
    }
}

/// A workflow ready to run, with its timed actions.
pub struct Prepared {
    pub workflow: Workflow,
    pub pg: ParallelGraph,
    pub actions: Vec<(u64, Action)>,
}

pub fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let mut wf = spec.workflow()?;
    let mut actions = Vec::new();
    if let Some(scheduler) = spec.scheduler()? {
        for (i, r) in spec.reconfigurations.iter().enumerate() {
            let mut updates = r.updates.clone();
            updates.extend(request::touch(&wf, &r.touch, &format!("r{}", i + 1)));
            let request = request::resolve(&mut wf, &updates)?;
            actions.push((r.at_us, Action::Reconfigure { request, scheduler }));
        }
    }
    for &(at, policy) in &spec.checkpoints {
        actions.push((at, Action::Checkpoint(policy)));
    }
    let pg = expand_parallel(&wf.graph);
    Ok(Prepared { workflow: wf, pg, actions })
}

impl Prepared {
    pub fn config(&self, spec: &ExperimentSpec, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            channel_capacity: spec.channel_capacity,
            sources: self.workflow.sources.clone(),
            until_us: spec.until_us,
            cost_factors: spec.cost_factors.iter().map(|(w, f)| (OperatorId::new(w), *f)).collect(),
            ..RunConfig::default()
        }
    }

    pub fn run(&self, spec: &ExperimentSpec, seed: u64) -> Result<RunOutcome> {
        engine::run(&self.pg, &self.workflow.setups, self.config(spec, seed), spec.mode.into(), self.actions.clone())
            .with_context(|| format!("engine failure (reproduce with seed {seed})"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub vertices: usize,
    pub edges: usize,
    pub heads: Vec<String>,
    pub longest_path_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub submitted_ms: f64,
    pub delay_ms: Option<f64>,
    pub status: String,
    pub components: Vec<ComponentSummary>,
}

/// Metrics of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub seed: u64,
    pub end_ms: f64,
    pub sink_tuples: usize,
    pub invalid: u64,
    pub rejected: usize,
    pub requests: Vec<RequestSummary>,
    /// `(window end, mean latency)` over tuples received in the window.
    pub latency_ms: Vec<(f64, f64)>,
    /// `(window end, invalid tuples received so far)`.
    pub invalid_series: Vec<(f64, u64)>,
}

fn ms(us: u64) -> f64 {
    us as f64 / 1000.0
}

/// Extracts the per-repetition metrics from a run.
pub fn measure(outcome: &RunOutcome, seed: u64, window_ms: u64) -> RepResult {
    let window_us = window_ms * 1000;
    let end_us = outcome.metrics.end_us;
    let windows = (end_us / window_us + 1) as usize;
    let mut lat = vec![(0u64, 0usize); windows];
    let mut bad = vec![0u64; windows];
    let mut invalid = 0;
    for r in &outcome.sink {
        let w = ((r.received_us / window_us) as usize).min(windows - 1);
        lat[w].0 += r.received_us.saturating_sub(r.source_ts_us);
        lat[w].1 += 1;
        if r.payload.get("valid") == Some(&Value::Bool(false)) {
            bad[w] += 1;
            invalid += 1;
        }
    }
    let end = |w: usize| ms((w as u64 + 1) * window_us);
    let latency_ms =
        lat.iter().enumerate().filter(|(_, l)| l.1 > 0).map(|(w, l)| (end(w), ms(l.0) / l.1 as f64)).collect();
    let invalid_series = bad
        .iter()
        .scan(0, |acc, b| {
            *acc += b;
            Some(*acc)
        })
        .enumerate()
        .map(|(w, c)| (end(w), c))
        .collect();
    let requests = outcome
        .requests
        .iter()
        .map(|r| RequestSummary {
            submitted_ms: ms(r.submitted_us),
            delay_ms: r.delay_us().map(ms),
            status: serde_json::to_value(&r.status).ok().and_then(|v| v["status"].as_str().map(String::from)).unwrap_or_default(),
            components: r
                .plan
                .components
                .iter()
                .map(|c| ComponentSummary {
                    vertices: c.vertices.len(),
                    edges: c.edges.len(),
                    heads: c.heads.iter().map(|h| h.to_string()).collect(),
                    longest_path_len: c.longest_path_len,
                })
                .collect(),
        })
        .collect();
    RepResult {
        seed,
        end_ms: ms(end_us),
        sink_tuples: outcome.sink.len(),
        invalid,
        rejected: outcome.rejected.len(),
        requests,
        latency_ms,
        invalid_series,
    }
}

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub ci95: f64,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary { n, mean: f64::NAN, ci95: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary { n, mean, ci95: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Summary { n, mean, ci95: 1.96 * (var / n as f64).sqrt() }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub spec: ExperimentSpec,
    /// Worker-level channels of the expanded dataflow.
    pub channels: usize,
    /// Delay per reconfiguration, over repetitions where it completed.
    pub delay_ms: Vec<Summary>,
    pub invalid: Summary,
    /// Mean end-to-end latency per repetition, summarized.
    pub latency_ms: Summary,
    pub reps: Vec<RepResult>,
}

/// Runs every repetition; repetition `i` uses seed `spec.seed + i`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricsReport> {
    let prepared = prepare(spec)?;
    let one = |i: u32| -> Result<RepResult> {
        let seed = spec.seed + i as u64;
        let out = prepared.run(spec, seed)?;
        Ok(measure(&out, seed, spec.window_ms))
    };
    let reps: Vec<RepResult> = if spec.parallel {
        (0..spec.reps).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..spec.reps).map(one).collect::<Result<_>>()?
    };
    Ok(report(spec.clone(), prepared.pg.channel_count(), reps))
}

fn report(spec: ExperimentSpec, channels: usize, reps: Vec<RepResult>) -> MetricsReport {
    let n_req = reps.iter().map(|r| r.requests.len()).max().unwrap_or(0);
    let delay_ms = (0..n_req)
        .map(|i| {
            let xs: Vec<f64> = reps.iter().filter_map(|r| r.requests.get(i).and_then(|q| q.delay_ms)).collect();
            summarize(&xs)
        })
        .collect();
    let invalid = summarize(&reps.iter().map(|r| r.invalid as f64).collect::<Vec<_>>());
    let lat: Vec<f64> = reps
        .iter()
        .filter(|r| !r.latency_ms.is_empty())
        .map(|r| r.latency_ms.iter().map(|l| l.1).sum::<f64>() / r.latency_ms.len() as f64)
        .collect();
    MetricsReport { spec, channels, delay_ms, invalid, latency_ms: summarize(&lat), reps }
}

impl MetricsReport {
    /// Rows of `event,vtime_or_wallclock_ms,value`. Events carry the
    /// repetition index as a `rep{i}.` prefix.
    pub fn csv_rows(&self) -> Vec<(String, f64, f64)> {
        let mut rows = Vec::new();
        for (i, r) in self.reps.iter().enumerate() {
            for q in &r.requests {
                if let Some(d) = q.delay_ms {
                    rows.push((format!("rep{i}.reconfig_delay_ms"), q.submitted_ms, d));
                }
            }
            for &(t, l) in &r.latency_ms {
                rows.push((format!("rep{i}.latency_ms"), t, l));
            }
            for &(t, c) in &r.invalid_series {
                rows.push((format!("rep{i}.invalid_cumulative"), t, c as f64));
            }
        }
        rows
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(["event", "vtime_or_wallclock_ms", "value"])?;
        for (e, t, v) in self.csv_rows() {
            w.write_record([e, format!("{t:.3}"), format!("{v:.3}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `{stem}.csv` and `{stem}.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        self.write_csv(&csv)?;
        fs::write(&json, serde_json::to_string_pretty(self)?)?;
        Ok((csv, json))
    }
}

/// Output directory from [`OUT_DIR_ENV`], defaulting to `./reconflow-out`.
pub fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("reconflow-out"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentSpec {
        ExperimentSpec {
            workflow: "fig2".into(),
            scheduler: "fries".into(),
            reconfigurations: vec![TimedUpdates { at_us: 20_000, touch: vec!["FC".into(), "MC".into()], ..Default::default() }],
            max_tuples: Some(200),
            rate: vec![(0, 4000.0)],
            reps: 3,
            window_ms: 10,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn summary_matches_hand_computation() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // sd = sqrt(5/3), half-width = 1.96 * sd / 2.
        assert!((s.ci95 - 1.96 * (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(summarize(&[7.0]).ci95, 0.0);
        assert!(summarize(&[]).mean.is_nan());
    }

    #[test]
    fn runs_and_reports() {
        let r = run_experiment(&small()).unwrap();
        assert_eq!(r.reps.len(), 3);
        assert_eq!(r.delay_ms.len(), 1);
        assert_eq!(r.delay_ms[0].n, 3);
        assert!(r.reps.iter().all(|x| x.sink_tuples == 200 && x.invalid == 0));
        assert_eq!(r.reps[0].requests[0].components.len(), 1);
        assert_eq!(r.reps[0].requests[0].components[0].longest_path_len, 2);
        assert_eq!(r.channels, 4);
    }

    #[test]
    fn parallel_repetitions_match_sequential() {
        let a = run_experiment(&small()).unwrap();
        let b = run_experiment(&ExperimentSpec { parallel: true, ..small() }).unwrap();
        assert_eq!(a.reps, b.reps);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = |f: &dyn Fn(&mut ExperimentSpec)| {
            let mut s = small();
            f(&mut s);
            s.validate().is_err()
        };
        assert!(bad(&|s| s.reps = 0));
        assert!(bad(&|s| s.rate = vec![(0, 0.0)]));
        assert!(bad(&|s| s.scheduler = "lazy".into()));
        assert!(bad(&|s| s.max_tuples = None));
        assert!(bad(&|s| {
            s.until_us = Some(10_000);
        }));
        assert!(ExperimentSpec::from_json(r#"{"workflow":"w1","bogus":1}"#).is_err());
        let mut s = small();
        s.source_rates.insert("FC".into(), vec![(0, 10.0)]);
        assert!(s.workflow().is_err());
    }
}
