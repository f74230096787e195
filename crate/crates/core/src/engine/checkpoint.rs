// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

//! Checkpoint artifacts and restore.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::controller::{CheckpointReport, CheckpointStatus};
use super::function::{OperatorFunction, OperatorSetup};
use super::message::WorkerSnapshot;
use super::worker::Worker;
use crate::error::EngineError;
use crate::graph::OperatorId;

/// Functions a restore may need, keyed by config id.
#[derive(Debug, Clone, Default)]
pub struct FunctionRegistry {
    functions: BTreeMap<String, OperatorFunction>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        FunctionRegistry::default()
    }

    pub fn insert(&mut self, function: OperatorFunction) {
        self.functions.insert(function.config_id().to_string(), function);
    }

    pub fn with(mut self, function: OperatorFunction) -> Self {
        self.insert(function);
        self
    }

    pub fn get(&self, config_id: &str) -> Option<&OperatorFunction> {
        self.functions.get(config_id)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

#[derive(Serialize)]
struct Body<'a> {
    checkpoint_id: u64,
    taken_us: u64,
    snapshots: &'a BTreeMap<OperatorId, WorkerSnapshot>,
}

/// A completed checkpoint: one snapshot per worker plus a checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointArtifact {
    pub checkpoint_id: u64,
    pub taken_us: u64,
    pub snapshots: BTreeMap<OperatorId, WorkerSnapshot>,
    pub checksum: String,
}

impl CheckpointArtifact {
    pub fn new(checkpoint_id: u64, taken_us: u64, snapshots: BTreeMap<OperatorId, WorkerSnapshot>) -> Self {
        let checksum = checksum(checkpoint_id, taken_us, &snapshots);
        CheckpointArtifact { checkpoint_id, taken_us, snapshots, checksum }
    }

    /// `None` unless the checkpoint completed.
    pub fn from_report(report: &CheckpointReport) -> Option<Self> {
        if report.status != CheckpointStatus::Completed {
            return None;
        }
        Some(CheckpointArtifact::new(report.id, report.completed_us?, report.snapshots.clone()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("artifact serializes")
    }

    /// Parses an artifact and verifies its checksum.
    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        let a: CheckpointArtifact =
            serde_json::from_str(text).map_err(|e| EngineError::CorruptArtifact(e.to_string()))?;
        a.verify()?;
        Ok(a)
    }

    pub fn verify(&self) -> Result<(), EngineError> {
        if checksum(self.checkpoint_id, self.taken_us, &self.snapshots) != self.checksum {
            return Err(EngineError::CorruptArtifact("checksum mismatch".into()));
        }
        Ok(())
    }

    /// Config id each worker held, e.g. for a mixed-configuration audit.
    pub fn configs(&self) -> BTreeMap<&OperatorId, &str> {
        self.snapshots.iter().map(|(w, s)| (w, s.config_id.as_str())).collect()
    }

    /// Loads every worker from its snapshot. Returns the highest version
    /// recorded so new multi-version requests do not reuse a tag.
    pub(crate) fn apply_to(
        &self,
        workers: &mut [Worker],
        setups: &BTreeMap<OperatorId, OperatorSetup>,
        registry: &FunctionRegistry,
    ) -> Result<u32, EngineError> {
        self.verify()?;
        if self.snapshots.len() != workers.len() {
            return Err(EngineError::CorruptArtifact(format!(
                "artifact has {} snapshots for {} workers",
                self.snapshots.len(),
                workers.len()
            )));
        }
        let mut max_version = 0;
        for w in workers.iter_mut() {
            let snap = self
                .snapshots
                .get(&w.id)
                .ok_or_else(|| EngineError::CorruptArtifact(format!("no snapshot for `{}`", w.id)))?;
            let lookup = |config: &str| -> Result<OperatorFunction, EngineError> {
                if let Some(f) = registry.get(config) {
                    return Ok(f.clone());
                }
                if let Some(s) = setups.get(&w.logical).filter(|s| s.function.config_id() == config) {
                    return Ok(s.function.clone());
                }
                if config == w.active.function.config_id() {
                    return Ok(w.active.function.clone());
                }
                Err(EngineError::CorruptArtifact(format!("unknown config `{config}` at `{}`", w.id)))
            };
            let function = lookup(&snap.config_id)?;
            let staged = match &snap.staged {
                Some((config, v, state)) => Some((lookup(config)?, *v, state.clone())),
                None => None,
            };
            max_version = max_version.max(snap.version).max(snap.source_version);
            w.restore(snap, function, staged);
        }
        Ok(max_version)
    }
}

fn checksum(checkpoint_id: u64, taken_us: u64, snapshots: &BTreeMap<OperatorId, WorkerSnapshot>) -> String {
    let body = serde_json::to_vec(&Body { checkpoint_id, taken_us, snapshots }).expect("artifact serializes");
    hex::encode(Sha256::digest(body))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(w: &str, config: &str) -> WorkerSnapshot {
        WorkerSnapshot {
            worker: w.into(),
            config_id: config.into(),
            version: 0,
            state: serde_json::json!({"n": 1}),
            staged: None,
            source_next_seq: None,
            source_version: 0,
        }
    }

    #[test]
    fn json_round_trip_keeps_checksum_valid() {
        let snaps = [("a", "f"), ("b", "g")].iter().map(|(w, c)| (OperatorId::new(w), snap(w, c))).collect();
        let a = CheckpointArtifact::new(3, 10, snaps);
        let back = CheckpointArtifact::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn tampered_state_is_rejected() {
        let snaps = [(OperatorId::new("a"), snap("a", "f"))].into_iter().collect();
        let a = CheckpointArtifact::new(1, 5, snaps);
        let text = a.to_json().replace("\"n\":1", "\"n\":2");
        assert!(matches!(CheckpointArtifact::from_json(&text), Err(EngineError::CorruptArtifact(_))));
        assert!(CheckpointArtifact::from_json("{").is_err());
    }
}
