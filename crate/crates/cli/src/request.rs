// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Reconfiguration request files.

use anyhow::{bail, Result};
use reconflow_core::sched::{FriesOptions, ReconfigurationRequest, Scheduler, SchedulerKind};
use reconflow_core::OperatorId;
use serde::{Deserialize, Serialize};

use crate::catalog::Workflow;
use crate::functions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateSpec {
    pub operator: String,
    pub new_function: String,
    #[serde(default = "identity")]
    pub state_transform: String,
}

fn identity() -> String {
    "identity".into()
}

impl UpdateSpec {
    pub fn new(operator: &str, new_function: &str) -> Self {
        UpdateSpec { operator: operator.into(), new_function: new_function.into(), state_transform: identity() }
    }
}

/// `{scheduler, options: {extended, pruning}, updates: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestFile {
    pub scheduler: SchedulerKind,
    #[serde(default)]
    pub options: FriesOptions,
    pub updates: Vec<UpdateSpec>,
}

impl RequestFile {
    pub fn scheduler(&self) -> Scheduler {
        Scheduler::from_kind(self.scheduler, self.options)
    }
}

/// Resolves update names against the built-in functions. New functions are
/// added to the workflow registry so checkpoints taken after the update can
/// be restored.
pub fn resolve(wf: &mut Workflow, updates: &[UpdateSpec]) -> Result<ReconfigurationRequest> {
    let mut req = ReconfigurationRequest::new();
    for u in updates {
        let op = OperatorId::new(&u.operator);
        if !wf.graph.contains(&op) {
            bail!("workflow `{}` has no operator `{op}`", wf.name);
        }
        let update = functions::update(&op, &u.new_function, &u.state_transform)?;
        wf.registry.insert(update.new_function.clone());
        req = req.with(op, update);
    }
    Ok(req)
}

/// Updates that keep each operator's function but give it a new config id
/// ending in `/{label}`.
pub fn touch(wf: &Workflow, ops: &[String], label: &str) -> Vec<UpdateSpec> {
    ops.iter()
        .map(|op| {
            let current = wf.functions.get(&OperatorId::new(op)).map(String::as_str).unwrap_or("passthrough");
            let base = current.split_once('/').map_or(current, |(b, _)| b);
            UpdateSpec::new(op, &format!("{base}/{label}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{workflow, CatalogOptions};

    #[test]
    fn parses_and_resolves() {
        let text = r#"{"scheduler":"fries","options":{"extended":true,"pruning":true},
            "updates":[{"operator":"FD","new_function":"inference:5","state_transform":"reset"}]}"#;
        let rf: RequestFile = serde_json::from_str(text).unwrap();
        assert_eq!(rf.scheduler(), Scheduler::Fries(FriesOptions::extended(true)));
        let mut wf = workflow("w1", &CatalogOptions::default()).unwrap();
        let req = resolve(&mut wf, &rf.updates).unwrap();
        assert_eq!(req.operators().len(), 1);
        assert!(wf.registry.get("FD@inference:5").is_some());
        let bad = vec![UpdateSpec::new("NOPE", "passthrough")];
        assert!(resolve(&mut wf, &bad).is_err());
        let t = touch(&wf, &["FD".into()], "r1");
        assert_eq!(t[0].new_function, "inference:10/r1");
    }
}
