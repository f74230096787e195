// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Randomized safety campaigns with failure minimization.

use std::collections::BTreeMap;
use std::fmt;

use anyhow::{Context, Result};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use reconflow_core::engine::{self, Action, Mode, OperatorSetup, RunConfig, SourceSpec};
use reconflow_core::graph::expand_parallel;
use reconflow_core::sched::{ReconfigurationRequest, Scheduler};
use reconflow_core::txn::{audit_version_consistency, check_conflict_serializable};
use reconflow_core::{DataflowGraph, OperatorId, OperatorMeta};
use serde::Serialize;

use crate::catalog::{self, CatalogOptions};
use crate::functions;

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    /// Random DAGs; each operator with outputs is one-to-many with this
    /// probability.
    Random { one_to_many: f64 },
    Catalog(String),
}

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub scheduler: Scheduler,
    pub graph: GraphSource,
    pub runs: u64,
    pub first_seed: u64,
    pub max_vertices: usize,
    /// Inner operators of random graphs get `1..=max_workers` workers.
    pub max_workers: u32,
    /// Fixed reconfiguration set; random when empty.
    pub ops: Vec<String>,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            scheduler: Scheduler::Epoch,
            graph: GraphSource::Random { one_to_many: 0.0 },
            runs: 100,
            first_seed: 0,
            max_vertices: 8,
            max_workers: 2,
            ops: Vec::new(),
        }
    }
}

/// One generated run: a graph, the operators to reconfigure and the
/// workload.
#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub seed: u64,
    pub graph: DataflowGraph,
    pub functions: BTreeMap<OperatorId, String>,
    pub ops: Vec<OperatorId>,
    /// Tuples per source.
    pub tuples: u64,
    pub at_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub seed: u64,
    pub edges: Vec<(String, String)>,
    pub one_to_many: Vec<String>,
    pub ops: Vec<String>,
    pub tuples: u64,
    pub at_us: u64,
}

impl FuzzCase {
    pub fn summary(&self) -> CaseSummary {
        let g = &self.graph;
        CaseSummary {
            seed: self.seed,
            edges: g.edges().map(|e| (e.from.to_string(), e.to.to_string())).collect(),
            one_to_many: g.operators().filter(|(_, m)| m.is_one_to_many()).map(|(id, _)| id.to_string()).collect(),
            ops: self.ops.iter().map(|o| o.to_string()).collect(),
            tuples: self.tuples,
            at_us: self.at_us,
        }
    }
}

impl fmt::Display for CaseSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("{a}->{b}")).collect();
        write!(
            f,
            "seed {} tuples {} at {}us reconfigure [{}] edges [{}]",
            self.seed,
            self.tuples,
            self.at_us,
            self.ops.join(","),
            edges.join(" ")
        )?;
        if !self.one_to_many.is_empty() {
            write!(f, " one-to-many [{}]", self.one_to_many.join(","))?;
        }
        Ok(())
    }
}

fn random_graph(rng: &mut SmallRng, max_vertices: usize, one_to_many: f64, max_workers: u32) -> DataflowGraph {
    loop {
        let n = rng.gen_range(2..=max_vertices.max(2));
        let mut edges = Vec::new();
        for j in 1..n {
            for i in 0..j {
                if rng.gen_bool(0.35) {
                    edges.push((i, j));
                }
            }
            if !edges.iter().any(|&(_, b)| b == j) && rng.gen_bool(0.6) {
                edges.push((rng.gen_range(0..j), j));
            }
        }
        let mut b = DataflowGraph::builder();
        for v in 0..n {
            let has_in = edges.iter().any(|&(_, x)| x == v);
            let has_out = edges.iter().any(|&(x, _)| x == v);
            let mut meta = if has_out && rng.gen_bool(one_to_many) { OperatorMeta::one_to_many() } else { OperatorMeta::one_to_one() };
            if has_in && has_out {
                meta = meta.with_workers(rng.gen_range(1..=max_workers.max(1)));
            }
            b.add_operator(format!("v{v}"), meta.with_cost_ms(0.05));
        }
        for (x, y) in edges {
            b.add_edge(format!("v{x}"), format!("v{y}"));
        }
        if let Ok(g) = b.build() {
            return g;
        }
    }
}

fn default_function(meta: &OperatorMeta) -> &'static str {
    if meta.is_one_to_many() {
        "unnest:2"
    } else {
        "passthrough"
    }
}

/// Deterministically generates the case for `seed`.
pub fn generate(cfg: &FuzzConfig, seed: u64) -> Result<FuzzCase> {
    let mut rng = SmallRng::seed_from_u64(seed ^ 0xf0f0_5eed);
    let (graph, functions) = match &cfg.graph {
        GraphSource::Random { one_to_many } => {
            let g = random_graph(&mut rng, cfg.max_vertices, *one_to_many, cfg.max_workers);
            let f = g.operators().map(|(id, m)| (id.clone(), default_function(m).to_string())).collect();
            (g, f)
        }
        GraphSource::Catalog(name) => {
            let wf = catalog::workflow(name, &CatalogOptions::default())?;
            (wf.graph, wf.functions)
        }
    };
    let ops = if cfg.ops.is_empty() {
        let ids = graph.ids().to_vec();
        loop {
            let pick: Vec<OperatorId> = ids.iter().filter(|_| rng.gen_bool(0.35)).cloned().collect();
            if !pick.is_empty() {
                break pick;
            }
        }
    } else {
        cfg.ops.iter().map(OperatorId::new).collect()
    };
    let tuples = rng.gen_range(10..40);
    let at_us = rng.gen_range(0..8_000);
    Ok(FuzzCase { seed, graph, functions, ops, tuples, at_us })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseVerdict {
    pub serializable: bool,
    pub witness: Option<String>,
    pub version_violations: usize,
    /// Workers still holding two configurations at the end.
    pub retained: Vec<String>,
    /// The scheduler refused the request, e.g. basic Fries below a
    /// one-to-many operator.
    pub rejected: Option<String>,
}

impl CaseVerdict {
    pub fn failed(&self) -> bool {
        !self.serializable || self.version_violations > 0 || !self.retained.is_empty()
    }
}

/// Runs one case and checks the log.
pub fn execute(case: &FuzzCase, scheduler: Scheduler) -> Result<CaseVerdict> {
    let g = &case.graph;
    let mut setups = BTreeMap::new();
    let mut request = ReconfigurationRequest::new();
    for (id, m) in g.operators() {
        let name = case.functions.get(id).map(String::as_str).unwrap_or_else(|| default_function(m));
        setups.insert(id.clone(), OperatorSetup::new(functions::build(id, name)?, functions::initial_state(name)));
        if case.ops.contains(id) {
            let base = name.split_once('/').map_or(name, |(b, _)| b);
            request = request.with(id.clone(), functions::update(id, &format!("{base}/new"), "identity")?);
        }
    }
    let mut cfg = RunConfig::seeded(case.seed);
    for s in g.sources() {
        cfg = cfg.source(g.id(s).clone(), SourceSpec::count(case.tuples, 4000.0));
    }
    let pg = expand_parallel(g);
    let out = engine::run(&pg, &setups, cfg, Mode::Deterministic, vec![(case.at_us, Action::Reconfigure { request, scheduler })])
        .with_context(|| format!("engine failure on {}", case.summary()))?;
    let v = check_conflict_serializable(&out.log)?;
    // Only the multi-version scheduler tags tuples with versions.
    let version_violations = if scheduler == Scheduler::MultiVersion && !out.versions.is_empty() {
        audit_version_consistency(&out.log, &out.versions)?.violations.len()
    } else {
        0
    };
    Ok(CaseVerdict {
        serializable: v.serializable,
        witness: v.witness.map(|w| {
            format!(
                "txn {}: Phi({}) before Mu({}), Mu({}) before Phi({})",
                w.txn_id, w.phi_before_mu.worker, w.phi_before_mu.worker, w.mu_before_phi.worker, w.mu_before_phi.worker
            )
        }),
        version_violations,
        retained: out.metrics.retained_states.iter().filter(|(_, &n)| n != 1).map(|(w, _)| w.to_string()).collect(),
        rejected: out.rejected.first().map(|(_, e)| e.to_string()),
    })
}

/// Shrinks a failing case: fewer tuples, then fewer reconfigured operators.
pub fn minimize(case: &FuzzCase, scheduler: Scheduler) -> Result<(FuzzCase, CaseVerdict)> {
    let mut best = case.clone();
    let mut verdict = execute(&best, scheduler)?;
    debug_assert!(verdict.failed());
    let try_case = |c: FuzzCase, best: &mut FuzzCase, verdict: &mut CaseVerdict| -> Result<bool> {
        let v = execute(&c, scheduler)?;
        if v.failed() {
            *best = c;
            *verdict = v;
            return Ok(true);
        }
        Ok(false)
    };
    while best.tuples > 1 {
        let c = FuzzCase { tuples: best.tuples / 2, ..best.clone() };
        if !try_case(c, &mut best, &mut verdict)? {
            break;
        }
    }
    while best.tuples > 1 {
        let c = FuzzCase { tuples: best.tuples - 1, ..best.clone() };
        if !try_case(c, &mut best, &mut verdict)? {
            break;
        }
    }
    let mut i = 0;
    while i < best.ops.len() && best.ops.len() > 1 {
        let mut c = best.clone();
        c.ops.remove(i);
        if !try_case(c, &mut best, &mut verdict)? {
            i += 1;
        }
    }
    Ok((best, verdict))
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub original: CaseSummary,
    pub minimized: CaseSummary,
    pub verdict: CaseVerdict,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FuzzReport {
    pub runs: u64,
    /// Runs whose request the scheduler refused.
    pub rejected: u64,
    pub failure: Option<Failure>,
}

/// Runs up to `cfg.runs` cases and stops at the first failure, which is
/// minimized.
pub fn campaign(cfg: &FuzzConfig) -> Result<FuzzReport> {
    let mut report = FuzzReport::default();
    for seed in cfg.first_seed..cfg.first_seed + cfg.runs {
        let case = generate(cfg, seed)?;
        let v = execute(&case, cfg.scheduler)?;
        report.runs += 1;
        if v.rejected.is_some() {
            report.rejected += 1;
        }
        if v.failed() {
            let (min, verdict) = minimize(&case, cfg.scheduler)?;
            report.failure = Some(Failure { original: case.summary(), minimized: min.summary(), verdict });
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use reconflow_core::sched::FriesOptions;

    #[test]
    fn generation_is_deterministic() {
        let cfg = FuzzConfig { graph: GraphSource::Random { one_to_many: 0.4 }, ..FuzzConfig::default() };
        let a = generate(&cfg, 11).unwrap().summary();
        let b = generate(&cfg, 11).unwrap().summary();
        assert_eq!(a, b);
    }

    #[test]
    fn epoch_campaign_passes() {
        let cfg = FuzzConfig { runs: 30, ..FuzzConfig::default() };
        let r = campaign(&cfg).unwrap();
        assert_eq!(r.runs, 30);
        assert!(r.failure.is_none());
    }

    #[test]
    fn naive_on_fig2_is_found_and_minimized() {
        let cfg = FuzzConfig {
            scheduler: Scheduler::NaiveFcm,
            graph: GraphSource::Catalog("fig2".into()),
            runs: 200,
            ops: vec!["FM".into(), "MC".into()],
            ..FuzzConfig::default()
        };
        let f = campaign(&cfg).unwrap().failure.expect("naive FCM should fail");
        assert!(f.minimized.tuples <= f.original.tuples);
        assert!(!f.verdict.serializable);
        assert!(f.verdict.witness.is_some());
    }

    #[test]
    fn basic_fries_rejects_one_to_many_requests() {
        let cfg = FuzzConfig {
            scheduler: Scheduler::Fries(FriesOptions::basic()),
            graph: GraphSource::Catalog("fig10".into()),
            runs: 3,
            ops: vec!["FMX".into()],
            ..FuzzConfig::default()
        };
        let r = campaign(&cfg).unwrap();
        assert_eq!(r.rejected, 3);
        assert!(r.failure.is_none());
    }
}
