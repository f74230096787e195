// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Built-in workflows: the five experiment workflows and the small example
//! topologies.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use reconflow_core::engine::{FunctionRegistry, OperatorSetup, SourceSpec};
use reconflow_core::{DataflowGraph, OperatorId, OperatorMeta};

use crate::functions;

pub const WORKFLOWS: &[&str] =
    &["w1", "w2", "w3", "w4", "w5", "fig2", "fig7", "fig9", "fig10", "fig11a", "fig11b", "fig11c", "fig12"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogOptions {
    /// Workers of every non-source, non-sink operator (and of the `w2`
    /// source).
    pub workers: u32,
    /// Queue length of the inference operators.
    pub inference_queue: usize,
}

impl Default for CatalogOptions {
    fn default() -> Self {
        CatalogOptions { workers: 1, inference_queue: 10 }
    }
}

/// A runnable workflow.
#[derive(Debug, Clone)]
pub struct Workflow {
    pub name: String,
    pub graph: DataflowGraph,
    pub functions: BTreeMap<OperatorId, String>,
    pub setups: BTreeMap<OperatorId, OperatorSetup>,
    pub registry: FunctionRegistry,
    pub sources: BTreeMap<OperatorId, SourceSpec>,
}

impl Workflow {
    /// Replaces the function of `op`, e.g. to stamp versions at a source.
    pub fn set_function(&mut self, op: &OperatorId, name: &str) -> Result<()> {
        if !self.graph.contains(op) {
            bail!("workflow `{}` has no operator `{op}`", self.name);
        }
        let f = functions::build(op, name)?;
        self.registry.insert(f.clone());
        self.setups.insert(op.clone(), OperatorSetup::new(f, functions::initial_state(name)));
        self.functions.insert(op.clone(), name.to_string());
        Ok(())
    }

    /// Overrides the per-tuple cost of `op`.
    pub fn set_cost_ms(&mut self, op: &OperatorId, cost_ms: f64) -> Result<()> {
        if !self.graph.contains(op) {
            bail!("workflow `{}` has no operator `{op}`", self.name);
        }
        let target = op.clone();
        self.graph = self.graph.map_meta(|id, m| {
            if *id == target {
                m.cost_ms = cost_ms;
            }
        });
        // Inference carries its own cost; a plain function picks up the meta.
        if let Some(name) = self.functions.get(op).cloned() {
            if name.starts_with("inference") {
                let f = functions::build(op, &name)?.with_cost_us((cost_ms * 1000.0).round() as u64);
                let state = self.setups[op].state.clone();
                self.setups.insert(op.clone(), OperatorSetup::new(f, state));
            }
        }
        Ok(())
    }
}

struct Spec {
    ops: Vec<(&'static str, OperatorMeta, String)>,
    edges: Vec<(&'static str, &'static str)>,
    /// Extra operators that get `workers` even though they are sources.
    parallel_sources: &'static [&'static str],
}

fn cheap() -> OperatorMeta {
    OperatorMeta::one_to_one().with_cost_ms(0.05)
}

fn pass() -> String {
    "passthrough".into()
}

fn spec(name: &str, opts: &CatalogOptions) -> Result<Spec> {
    let inf = format!("inference:{}", opts.inference_queue);
    let join = || OperatorMeta::one_to_one().with_cost_ms(0.2);
    let s = match name {
        "w1" => Spec {
            ops: vec![("SRC", cheap(), pass()), ("FD", OperatorMeta::one_to_one(), inf), ("SNK", cheap(), pass())],
            edges: vec![("SRC", "FD"), ("FD", "SNK")],
            parallel_sources: &[],
        },
        "w2" => Spec {
            ops: vec![
                ("SRC", cheap(), pass()),
                ("J1", join(), pass()),
                ("J2", join(), pass()),
                ("J3", join(), pass()),
                ("J4", join(), pass()),
                ("SNK", cheap(), pass()),
            ],
            edges: vec![("SRC", "J1"), ("J1", "J2"), ("J2", "J3"), ("J3", "J4"), ("J4", "SNK")],
            parallel_sources: &["SRC"],
        },
        "w3" => Spec {
            ops: vec![
                ("WS", cheap(), pass()),
                ("CS", cheap(), pass()),
                ("SS", cheap(), pass()),
                ("J5", join(), pass()),
                ("J6", join(), pass()),
                ("J7", join(), pass()),
                ("U1", cheap(), pass()),
                ("J8", join(), pass()),
                ("J9", join(), pass()),
                ("SNK", cheap(), pass()),
            ],
            edges: vec![
                ("WS", "J5"),
                ("J5", "J7"),
                ("J7", "U1"),
                ("CS", "J6"),
                ("J6", "U1"),
                ("SS", "U1"),
                ("U1", "J8"),
                ("J8", "J9"),
                ("J9", "SNK"),
            ],
            parallel_sources: &[],
        },
        "w4" => Spec {
            ops: vec![
                ("SRC", cheap(), pass()),
                ("F1", cheap(), pass()),
                ("U2", OperatorMeta::one_to_many().with_cost_ms(0.05), "unnest:2".into()),
                ("FD1", OperatorMeta::one_to_one(), inf.clone()),
                ("FD2", OperatorMeta::one_to_one(), inf),
                ("F2", cheap(), pass()),
                ("SNK", cheap(), pass()),
            ],
            edges: vec![
                ("SRC", "F1"),
                ("F1", "U2"),
                ("U2", "FD1"),
                ("U2", "FD2"),
                ("FD1", "F2"),
                ("FD2", "F2"),
                ("F2", "SNK"),
            ],
            parallel_sources: &[],
        },
        "w5" => Spec {
            ops: vec![
                ("SRC", cheap(), pass()),
                ("RE", OperatorMeta::replicate().with_cost_ms(0.05), "replicate".into()),
                ("FD3", OperatorMeta::one_to_one(), inf.clone()),
                ("S1", cheap(), pass()),
                ("F3", cheap(), pass()),
                ("F4", cheap(), pass()),
                ("FD4", OperatorMeta::one_to_one(), inf),
                ("SJ", cheap().with_uniqueness(), "self_join:2".into()),
                ("E1", cheap(), pass()),
                ("SNK", cheap(), pass()),
            ],
            edges: vec![
                ("SRC", "RE"),
                ("RE", "FD3"),
                ("FD3", "S1"),
                ("S1", "F3"),
                ("F3", "SJ"),
                ("RE", "F4"),
                ("F4", "FD4"),
                ("FD4", "SJ"),
                ("SJ", "E1"),
                ("E1", "SNK"),
            ],
            parallel_sources: &[],
        },
        "fig2" => Spec {
            ops: ["SRC", "FC", "FM", "MC", "SNK"].iter().map(|&o| (o, cheap().with_cost_ms(0.2), pass())).collect(),
            edges: vec![("SRC", "FC"), ("FC", "FM"), ("FM", "MC"), ("MC", "SNK")],
            parallel_sources: &[],
        },
        "fig7" => Spec {
            ops: ["SRC", "X", "C", "D", "SNK"].iter().map(|&o| (o, cheap().with_cost_ms(0.2), pass())).collect(),
            edges: vec![("SRC", "X"), ("X", "C"), ("X", "D"), ("C", "SNK"), ("D", "SNK")],
            parallel_sources: &[],
        },
        "fig9" => Spec {
            ops: ["A", "B", "C", "D", "E", "F", "G", "H"].iter().map(|&o| (o, cheap(), pass())).collect(),
            edges: vec![
                ("A", "C"),
                ("B", "C"),
                ("B", "G"),
                ("C", "D"),
                ("C", "E"),
                ("D", "F"),
                ("E", "F"),
                ("F", "H"),
                ("G", "H"),
            ],
            parallel_sources: &[],
        },
        "fig10" => Spec {
            ops: vec![
                ("FC", cheap(), pass()),
                ("J", OperatorMeta::one_to_many().with_cost_ms(0.05), "unnest:3".into()),
                ("SP", cheap(), pass()),
                ("FMX", cheap(), pass()),
                ("FMY", cheap(), pass()),
                ("U1", cheap(), pass()),
            ],
            edges: vec![("FC", "J"), ("J", "SP"), ("SP", "FMX"), ("SP", "FMY"), ("FMX", "U1"), ("FMY", "U1")],
            parallel_sources: &[],
        },
        "fig11a" | "fig11b" | "fig11c" | "fig12" => {
            let mut ops = vec![
                ("SRC", cheap(), pass()),
                ("RE", OperatorMeta::replicate().with_cost_ms(0.05), "replicate".into()),
                ("C", cheap(), pass()),
                ("D", cheap(), pass()),
            ];
            let edges = match name {
                "fig11a" => {
                    ops.push(("E", cheap(), pass()));
                    vec![("SRC", "RE"), ("RE", "C"), ("RE", "D"), ("C", "E")]
                }
                "fig11b" => {
                    ops.push(("E", cheap(), pass()));
                    ops.push(("F", cheap(), pass()));
                    vec![("SRC", "RE"), ("RE", "C"), ("RE", "D"), ("C", "E"), ("D", "F")]
                }
                "fig11c" => {
                    ops.push(("X", cheap(), pass()));
                    vec![("SRC", "RE"), ("RE", "C"), ("RE", "D"), ("C", "X"), ("D", "X")]
                }
                _ => {
                    ops.push(("SJ", cheap().with_uniqueness(), "self_join:2".into()));
                    ops.push(("E", cheap(), pass()));
                    vec![("SRC", "RE"), ("RE", "C"), ("RE", "D"), ("C", "SJ"), ("D", "SJ"), ("SJ", "E")]
                }
            };
            Spec { ops, edges, parallel_sources: &[] }
        }
        other => bail!("unknown workflow `{other}` (known: {})", WORKFLOWS.join(", ")),
    };
    Ok(s)
}

/// Builds a catalog workflow. Every source defaults to 1,000 tuples/s.
pub fn workflow(name: &str, opts: &CatalogOptions) -> Result<Workflow> {
    let s = spec(name, opts)?;
    let has_input = |op: &str| s.edges.iter().any(|&(_, to)| to == op);
    let has_output = |op: &str| s.edges.iter().any(|&(from, _)| from == op);
    let mut b = DataflowGraph::builder();
    for (op, meta, _) in &s.ops {
        let parallel = (has_input(op) && has_output(op)) || s.parallel_sources.contains(op);
        let meta = if parallel { meta.clone().with_workers(opts.workers) } else { meta.clone() };
        b.add_operator(*op, meta);
    }
    for (from, to) in &s.edges {
        b.add_edge(*from, *to);
    }
    let graph = b.build()?;

    let mut wf = Workflow {
        name: name.to_string(),
        graph,
        functions: BTreeMap::new(),
        setups: BTreeMap::new(),
        registry: FunctionRegistry::new(),
        sources: BTreeMap::new(),
    };
    for (op, _, f) in &s.ops {
        wf.set_function(&OperatorId::new(op), f)?;
        if !has_input(op) {
            wf.sources.insert(OperatorId::new(op), SourceSpec::rate(1000.0));
        }
    }
    Ok(wf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_workflow_builds() {
        for name in WORKFLOWS {
            let wf = workflow(name, &CatalogOptions::default()).unwrap();
            assert_eq!(wf.setups.len(), wf.graph.len(), "{name}");
            assert!(!wf.sources.is_empty());
        }
        assert!(workflow("w9", &CatalogOptions::default()).is_err());
    }

    #[test]
    fn workers_apply_to_inner_operators() {
        let wf = workflow("w1", &CatalogOptions { workers: 4, ..CatalogOptions::default() }).unwrap();
        assert_eq!(wf.graph.meta_of(&"FD".into()).unwrap().worker_count, 4);
        assert_eq!(wf.graph.meta_of(&"SRC".into()).unwrap().worker_count, 1);
    }

    #[test]
    fn cost_override_reaches_inference() {
        let mut wf = workflow("w1", &CatalogOptions::default()).unwrap();
        wf.set_cost_ms(&"FD".into(), 3.0).unwrap();
        assert_eq!(wf.setups[&OperatorId::new("FD")].function.cost_us(), Some(3_000));
        assert!(wf.set_cost_ms(&"ZZ".into(), 1.0).is_err());
    }
}
